//! On-disk model format: a JSON manifest plus one little-endian f32 weights file.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "name": "encoder",
//!   "input": { "name": "image", "channels": 3, "height": 224, "width": 224 },
//!   "preprocessing": { "mean": [0.485, 0.456, 0.406], "std": [0.229, 0.224, 0.225] },
//!   "nodes": [
//!     { "id": "conv1", "op": "conv2d", "inputs": ["image"],
//!       "attrs": { "stride": 2, "padding": 3, "groups": 1 },
//!       "params": { "weight": { "offset": 0, "shape": [64, 3, 7, 7] } } }
//!   ],
//!   "outputs": ["conv1"],
//!   "taps": []
//! }
//! ```
//!
//! Parameter names: conv2d `weight` (O, I/groups, Kh, Kw) and optional `bias`;
//! batch_norm `gamma`, `beta`, `running_mean`, `running_var`. Blobs must tile
//! the weights file exactly, without gaps or overlap. Unknown fields are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BatchNorm, Conv2d, Graph, InputSpec, Node, Op, Preprocessing};
use crate::error::{Error, Result};
use crate::ops::{Activation, ConvParams, PoolKind, PoolParams};
use crate::tensor::{Shape4, Tensor4, DEFAULT_EPS};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    pub input: ManifestInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<Preprocessing>,
    pub nodes: Vec<ManifestNode>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub taps: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestInput {
    pub name: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestNode {
    pub id: String,
    pub op: String,
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "NodeAttrs::is_empty")]
    pub attrs: NodeAttrs,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, BlobRef>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeAttrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f32>,
}

impl NodeAttrs {
    fn is_empty(&self) -> bool {
        self == &NodeAttrs::default()
    }

    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.stride.is_some() {
            v.push("stride");
        }
        if self.padding.is_some() {
            v.push("padding");
        }
        if self.groups.is_some() {
            v.push("groups");
        }
        if self.kernel.is_some() {
            v.push("kernel");
        }
        if self.factor.is_some() {
            v.push("factor");
        }
        if self.eps.is_some() {
            v.push("eps");
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobRef {
    /// Byte offset into the weights file.
    pub offset: u64,
    pub shape: Vec<usize>,
}

impl BlobRef {
    fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

fn format_err(node: &str, msg: impl Into<String>) -> Error {
    Error::at_node(node, Error::Format(msg.into()))
}

const CONV_PARAMS: &[&str] = &["weight", "bias"];
const BN_PARAMS: &[&str] = &["gamma", "beta", "running_mean", "running_var"];

struct Blobs<'a> {
    weights: &'a [u8],
}

impl Blobs<'_> {
    fn read(&self, node: &ManifestNode, name: &str) -> Result<Option<(Vec<usize>, Vec<f32>)>> {
        let Some(r) = node.params.get(name) else {
            return Ok(None);
        };
        let start = r.offset as usize;
        let bytes = &self.weights[start..start + 4 * r.numel()];
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Some((r.shape.clone(), data)))
    }

    fn vector(&self, node: &ManifestNode, name: &str) -> Result<Option<Vec<f32>>> {
        match self.read(node, name)? {
            None => Ok(None),
            Some((shape, data)) if shape.len() == 1 => Ok(Some(data)),
            Some((shape, _)) => Err(format_err(
                &node.id,
                format!("param `{name}` must be rank 1, got shape {shape:?}"),
            )),
        }
    }

    fn required_vector(&self, node: &ManifestNode, name: &str) -> Result<Vec<f32>> {
        self.vector(node, name)?
            .ok_or_else(|| format_err(&node.id, format!("missing param `{name}`")))
    }
}

fn check_blob_ranges(m: &Manifest, file_len: u64) -> Result<()> {
    let mut ranges = Vec::new();
    let mut total = 0u64;
    for node in &m.nodes {
        for (name, r) in &node.params {
            let blob = format!("{}.{}", node.id, name);
            let end = r.offset.saturating_add(4 * r.numel() as u64);
            if end > file_len {
                return Err(Error::BlobRange {
                    blob,
                    start: r.offset,
                    end,
                    file_len,
                });
            }
            total += end - r.offset;
            ranges.push((r.offset, end, blob));
        }
    }
    ranges.sort();
    for pair in ranges.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::Format(format!(
                "blobs `{}` and `{}` overlap",
                pair[0].2, pair[1].2
            )));
        }
    }
    if total != file_len {
        return Err(Error::Format(format!(
            "blobs cover {total} bytes but the weights file has {file_len}"
        )));
    }
    Ok(())
}

fn allow(node: &ManifestNode, attrs: &[&str], params: &[&str]) -> Result<()> {
    if let Some(a) = node.attrs.present().into_iter().find(|a| !attrs.contains(a)) {
        return Err(format_err(
            &node.id,
            format!("attribute `{a}` is not valid for {}", node.op),
        ));
    }
    if let Some(p) = node.params.keys().find(|p| !params.contains(&p.as_str())) {
        return Err(format_err(
            &node.id,
            format!("param `{p}` is not valid for {}", node.op),
        ));
    }
    Ok(())
}

fn build_op(node: &ManifestNode, blobs: &Blobs) -> Result<Op> {
    let a = &node.attrs;
    let op = match node.op.as_str() {
        "conv2d" => {
            allow(node, &["stride", "padding", "groups"], CONV_PARAMS)?;
            let (shape, data) = blobs
                .read(node, "weight")?
                .ok_or_else(|| format_err(&node.id, "missing param `weight`"))?;
            let [o, i, kh, kw] = shape[..] else {
                return Err(format_err(
                    &node.id,
                    format!("conv weight must be rank 4 (O, I, Kh, Kw), got {shape:?}"),
                ));
            };
            let weight = Tensor4::from_vec(Shape4::new(o, i, kh, kw), data)?;
            let bias = blobs.vector(node, "bias")?;
            if let Some(b) = &bias {
                if b.len() != o {
                    return Err(format_err(
                        &node.id,
                        format!("bias has {} entries for {o} filters", b.len()),
                    ));
                }
            }
            Op::Conv2d(Conv2d {
                weight,
                bias,
                params: ConvParams {
                    stride: a.stride.unwrap_or(1),
                    padding: a.padding.unwrap_or(0),
                    groups: a.groups.unwrap_or(1),
                },
            })
        }
        "batch_norm" => {
            allow(node, &["eps"], BN_PARAMS)?;
            let bn = BatchNorm {
                gamma: blobs.required_vector(node, "gamma")?,
                beta: blobs.required_vector(node, "beta")?,
                running_mean: blobs.required_vector(node, "running_mean")?,
                running_var: blobs.required_vector(node, "running_var")?,
                eps: a.eps.unwrap_or(DEFAULT_EPS),
            };
            if !(bn.eps >= 0.0) {
                return Err(format_err(&node.id, "eps must be >= 0"));
            }
            Op::BatchNorm(bn)
        }
        "relu" | "relu6" => {
            allow(node, &[], &[])?;
            Op::Activation(if node.op == "relu" {
                Activation::Relu
            } else {
                Activation::Relu6
            })
        }
        "maxpool" | "avgpool" => {
            allow(node, &["kernel", "stride", "padding"], &[])?;
            let kernel = a
                .kernel
                .ok_or_else(|| format_err(&node.id, "pool needs a `kernel` attribute"))?;
            let kind = if node.op == "maxpool" {
                PoolKind::Max
            } else {
                PoolKind::Avg
            };
            Op::Pool {
                kind,
                params: PoolParams {
                    kernel,
                    stride: a.stride.unwrap_or(kernel),
                    padding: a.padding.unwrap_or(0),
                },
            }
        }
        "upsample" => {
            allow(node, &["factor"], &[])?;
            Op::Upsample {
                factor: a
                    .factor
                    .ok_or_else(|| format_err(&node.id, "upsample needs a `factor` attribute"))?,
            }
        }
        "concat" | "add" => {
            allow(node, &[], &[])?;
            if node.op == "concat" {
                Op::Concat
            } else {
                Op::Add
            }
        }
        other => return Err(format_err(&node.id, format!("unsupported op `{other}`"))),
    };
    Ok(op)
}

/// Parses a manifest and materializes every parameter from the weights file.
pub fn load_model(manifest: &[u8], weights: &[u8]) -> Result<Graph> {
    let m: Manifest =
        serde_json::from_slice(manifest).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            m.format_version
        )));
    }
    check_blob_ranges(&m, weights.len() as u64)?;
    let blobs = Blobs { weights };
    let nodes = m
        .nodes
        .iter()
        .map(|n| {
            Ok(Node {
                id: n.id.clone(),
                inputs: n.inputs.clone(),
                op: build_op(n, &blobs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let g = Graph {
        name: m.name,
        input: InputSpec {
            name: m.input.name,
            channels: m.input.channels,
            height: m.input.height,
            width: m.input.width,
        },
        preprocessing: m.preprocessing,
        nodes,
        outputs: m.outputs,
        taps: m.taps,
    };
    g.validate()?;
    Ok(g)
}

struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    fn blob(&mut self, shape: Vec<usize>, data: &[f32]) -> BlobRef {
        let offset = self.bytes.len() as u64;
        for v in data {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        BlobRef { offset, shape }
    }

    fn vector(&mut self, data: &[f32]) -> BlobRef {
        self.blob(vec![data.len()], data)
    }
}

/// Serializes a valid graph. Blobs are written in node order, params in their
/// canonical order, so saving a loaded canonical model reproduces its weights file.
pub fn save_model(g: &Graph) -> Result<(Vec<u8>, Vec<u8>)> {
    g.validate()?;
    let mut w = Writer { bytes: Vec::new() };
    let mut nodes = Vec::with_capacity(g.nodes.len());
    for node in &g.nodes {
        let mut attrs = NodeAttrs::default();
        let mut params = BTreeMap::new();
        match &node.op {
            Op::Conv2d(c) => {
                attrs.stride = Some(c.params.stride);
                attrs.padding = Some(c.params.padding);
                attrs.groups = Some(c.params.groups);
                let s = c.weight.shape();
                params.insert("weight".into(), w.blob(vec![s.n, s.c, s.h, s.w], c.weight.data()));
                if let Some(b) = &c.bias {
                    params.insert("bias".into(), w.vector(b));
                }
            }
            Op::BatchNorm(bn) => {
                attrs.eps = Some(bn.eps);
                params.insert("gamma".into(), w.vector(&bn.gamma));
                params.insert("beta".into(), w.vector(&bn.beta));
                params.insert("running_mean".into(), w.vector(&bn.running_mean));
                params.insert("running_var".into(), w.vector(&bn.running_var));
            }
            Op::Pool { params: p, .. } => {
                attrs.kernel = Some(p.kernel);
                attrs.stride = Some(p.stride);
                attrs.padding = Some(p.padding);
            }
            Op::Upsample { factor } => attrs.factor = Some(*factor),
            Op::Activation(_) | Op::Concat | Op::Add => {}
        }
        nodes.push(ManifestNode {
            id: node.id.clone(),
            op: node.op.kind().to_string(),
            inputs: node.inputs.clone(),
            attrs,
            params,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        name: g.name.clone(),
        input: ManifestInput {
            name: g.input.name.clone(),
            channels: g.input.channels,
            height: g.input.height,
            width: g.input.width,
        },
        preprocessing: g.preprocessing.clone(),
        nodes,
        outputs: g.outputs.clone(),
        taps: g.taps.clone(),
    };
    let mut text = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    text.push(b'\n');
    Ok((text, w.bytes))
}

pub fn load_model_dir(dir: &Path) -> Result<Graph> {
    let manifest = fs::read(dir.join(MANIFEST_FILE))?;
    let weights = fs::read(dir.join(WEIGHTS_FILE))?;
    load_model(&manifest, &weights)
}

pub fn save_model_dir(g: &Graph, dir: &Path) -> Result<()> {
    let (manifest, weights) = save_model(g)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    fs::write(dir.join(WEIGHTS_FILE), weights)?;
    Ok(())
}
