//! Keep-mask propagation and graph rewriting.
//!
//! Channels are grouped into slots that must be removed together: a
//! channel-wise op (batch norm, activation, pooling, upsampling, depthwise
//! conv) ties each input channel to the matching output channel, concat ties
//! input channels to their offset in the output, and add ties both inputs to
//! the output. A slot group seeded by a detected zero channel is removed only
//! when every member is safe to drop:
//!
//! * it is not the graph input, a graph output or a declared tap;
//! * every dense conv reading it sees an exactly-zero channel there, so the
//!   dropped input slice contributed nothing;
//! * no grouped (non-depthwise) conv produces or reads it.
//!
//! Dense convs producing a member simply lose the matching filter. Anything
//! else is kept and reported as a reversion.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::KeepMask;
use crate::error::{Error, Result};
use crate::graph::{BatchNorm, Conv2d, Graph, Node, Op};
use crate::tensor::Tensor4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reversion {
    pub node: String,
    pub channel: usize,
    pub reason: String,
}

/// Which weight slices a node keeps after pruning.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceDirective {
    /// Kept output filters (conv) or channels (batch norm).
    pub out_channels: Vec<usize>,
    /// Kept input slices of a dense conv kernel.
    pub in_channels: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunePlan {
    /// Keep mask of every tensor (graph input and node outputs).
    pub keep: BTreeMap<String, Vec<bool>>,
    /// Weight slicing for every parameterized node.
    pub slices: BTreeMap<String, SliceDirective>,
    /// Detected zero channels that could not be removed.
    pub reverted: Vec<Reversion>,
}

impl PrunePlan {
    pub fn is_identity(&self) -> bool {
        self.keep.values().all(|m| m.iter().all(|&b| b))
    }

    pub fn kept(&self, tensor: &str) -> Option<Vec<usize>> {
        self.keep.get(tensor).map(|m| kept_indices(m))
    }

    pub fn removed_channels(&self) -> usize {
        self.keep
            .values()
            .map(|m| m.iter().filter(|b| !**b).count())
            .sum()
    }
}

fn kept_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &k)| k.then_some(i))
        .collect()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Lower index wins so roots are deterministic.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

enum ConvKind {
    Dense,
    Depthwise,
    Grouped,
}

fn conv_kind(c: &Conv2d) -> ConvKind {
    if c.is_dense() {
        ConvKind::Dense
    } else if c.is_depthwise() {
        ConvKind::Depthwise
    } else {
        ConvKind::Grouped
    }
}

/// Turns detected activation masks into a per-tensor keep plan.
pub fn propagate_masks(g: &Graph, detected: &[KeepMask]) -> Result<PrunePlan> {
    g.validate()?;
    let shapes = g.infer_shapes(g.input.shape())?;
    let index = g.node_index();

    // Tensor 0 is the graph input, tensor i + 1 is node i.
    let names: Vec<&str> = std::iter::once(g.input.name.as_str())
        .chain(g.nodes.iter().map(|n| n.id.as_str()))
        .collect();
    let tensor_of: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let widths: Vec<usize> = names.iter().map(|n| shapes[*n].c).collect();
    let mut base = Vec::with_capacity(names.len());
    let mut total = 0;
    for w in &widths {
        base.push(total);
        total += w;
    }
    let slot = |t: usize, c: usize| base[t] + c;

    let mut detected_zero: HashMap<usize, Vec<bool>> = HashMap::new();
    for m in detected {
        let i = *index.get(m.node_id.as_str()).ok_or_else(|| {
            Error::InvalidArgument(format!("mask anchored to unknown node `{}`", m.node_id))
        })?;
        if !g.nodes[i].op.is_activation() {
            return Err(Error::InvalidArgument(format!(
                "mask anchored to `{}`, which is a {} node, not relu/relu6",
                m.node_id,
                g.nodes[i].op.kind()
            )));
        }
        if m.bits.len() != widths[i + 1] {
            return Err(Error::InvalidArgument(format!(
                "mask for `{}` has {} bits but the tensor has {} channels",
                m.node_id,
                m.bits.len(),
                widths[i + 1]
            )));
        }
        detected_zero.insert(i + 1, m.bits.iter().map(|b| !b).collect());
    }

    // Exactly-zero channels, propagated forward through zero-preserving ops.
    let mut zero: Vec<Vec<bool>> = vec![vec![false; widths[0]]];
    let mut uf = UnionFind::new(total);
    for (i, node) in g.nodes.iter().enumerate() {
        let t = i + 1;
        let ins: Vec<usize> = node.inputs.iter().map(|n| tensor_of[n.as_str()]).collect();
        let z = match &node.op {
            Op::Activation(_) => {
                let mut z = zero[ins[0]].clone();
                if let Some(d) = detected_zero.get(&t) {
                    for (a, b) in z.iter_mut().zip(d) {
                        *a |= *b;
                    }
                }
                z
            }
            Op::Pool { .. } | Op::Upsample { .. } => zero[ins[0]].clone(),
            Op::Concat => ins.iter().flat_map(|&s| zero[s].clone()).collect(),
            Op::Add => zero[ins[0]]
                .iter()
                .zip(&zero[ins[1]])
                .map(|(a, b)| *a && *b)
                .collect(),
            Op::Conv2d(c) if c.is_depthwise() && c.bias.is_none() => zero[ins[0]].clone(),
            Op::Conv2d(_) | Op::BatchNorm(_) => vec![false; widths[t]],
        };
        zero.push(z);

        match &node.op {
            Op::Activation(_) | Op::Pool { .. } | Op::Upsample { .. } | Op::BatchNorm(_) => {
                for c in 0..widths[t] {
                    uf.union(slot(ins[0], c), slot(t, c));
                }
            }
            Op::Conv2d(conv) if conv.is_depthwise() => {
                for c in 0..widths[t] {
                    uf.union(slot(ins[0], c), slot(t, c));
                }
            }
            Op::Concat => {
                let mut off = 0;
                for &s in &ins {
                    for c in 0..widths[s] {
                        uf.union(slot(s, c), slot(t, off + c));
                    }
                    off += widths[s];
                }
            }
            Op::Add => {
                for c in 0..widths[t] {
                    uf.union(slot(ins[0], c), slot(t, c));
                    uf.union(slot(ins[1], c), slot(t, c));
                }
            }
            Op::Conv2d(_) => {}
        }
    }

    // Reasons a slot must stay.
    let mut blocked: HashMap<usize, String> = HashMap::new();
    let mut block = |uf: &mut UnionFind, s: usize, why: String| {
        blocked.entry(uf.find(s)).or_insert(why);
    };
    for c in 0..widths[0] {
        block(&mut uf, slot(0, c), format!("reaches graph input `{}`", g.input.name));
    }
    for id in g.outputs.iter().chain(&g.taps) {
        let t = tensor_of[id.as_str()];
        for c in 0..widths[t] {
            block(&mut uf, slot(t, c), format!("reaches protected output/tap `{id}`"));
        }
    }
    for (i, node) in g.nodes.iter().enumerate() {
        let t = i + 1;
        let Op::Conv2d(conv) = &node.op else { continue };
        let src = tensor_of[node.inputs[0].as_str()];
        match conv_kind(conv) {
            ConvKind::Dense => {
                for c in 0..widths[src] {
                    if !zero[src][c] {
                        block(
                            &mut uf,
                            slot(src, c),
                            format!("feeds conv `{}` without being exactly zero", node.id),
                        );
                    }
                }
            }
            ConvKind::Depthwise => {}
            ConvKind::Grouped => {
                for c in 0..widths[src] {
                    block(&mut uf, slot(src, c), format!("feeds grouped conv `{}`", node.id));
                }
                for c in 0..widths[t] {
                    block(&mut uf, slot(t, c), format!("produced by grouped conv `{}`", node.id));
                }
            }
        }
    }

    // Seed groups from detected zeros, in graph order.
    let mut removable: HashMap<usize, bool> = HashMap::new();
    let mut reverted = Vec::new();
    let mut seeds: Vec<(usize, usize)> = detected_zero
        .iter()
        .flat_map(|(&t, z)| z.iter().enumerate().filter(|(_, z)| **z).map(move |(c, _)| (t, c)))
        .collect();
    seeds.sort_unstable();
    for &(t, c) in &seeds {
        let root = uf.find(slot(t, c));
        match blocked.get(&root) {
            Some(why) => reverted.push(Reversion {
                node: names[t].to_string(),
                channel: c,
                reason: why.clone(),
            }),
            None => {
                removable.insert(root, true);
            }
        }
    }

    let mut keep: Vec<Vec<bool>> = (0..names.len())
        .map(|t| {
            (0..widths[t])
                .map(|c| !removable.contains_key(&uf.find(slot(t, c))))
                .collect()
        })
        .collect();

    // Never empty a tensor: restore the group holding its first channel.
    loop {
        let Some(t) = keep.iter().position(|m| !m.is_empty() && m.iter().all(|k| !k)) else {
            break;
        };
        let root = uf.find(slot(t, 0));
        removable.remove(&root);
        for &(st, sc) in &seeds {
            if uf.find(slot(st, sc)) == root {
                reverted.push(Reversion {
                    node: names[st].to_string(),
                    channel: sc,
                    reason: format!("would remove every channel of `{}`", names[t]),
                });
            }
        }
        for (tt, mask) in keep.iter_mut().enumerate() {
            for (c, k) in mask.iter_mut().enumerate() {
                if uf.find(base[tt] + c) == root {
                    *k = true;
                }
            }
        }
    }
    reverted.sort_by(|a, b| {
        (index.get(a.node.as_str()), a.channel).cmp(&(index.get(b.node.as_str()), b.channel))
    });

    let mut slices = BTreeMap::new();
    for (i, node) in g.nodes.iter().enumerate() {
        let t = i + 1;
        let directive = match &node.op {
            Op::Conv2d(conv) => SliceDirective {
                out_channels: kept_indices(&keep[t]),
                in_channels: conv
                    .is_dense()
                    .then(|| kept_indices(&keep[tensor_of[node.inputs[0].as_str()]])),
            },
            Op::BatchNorm(_) => SliceDirective {
                out_channels: kept_indices(&keep[t]),
                in_channels: None,
            },
            _ => continue,
        };
        slices.insert(node.id.clone(), directive);
    }

    Ok(PrunePlan {
        keep: names
            .iter()
            .zip(keep)
            .map(|(n, m)| (n.to_string(), m))
            .collect(),
        slices,
        reverted,
    })
}

fn pick(v: &[f32], idx: &[usize]) -> Vec<f32> {
    idx.iter().map(|&i| v[i]).collect()
}

fn mismatch(msg: String) -> Error {
    Error::InvalidArgument(format!("plan does not match graph: {msg}"))
}

/// Rewrites the graph according to the plan. Kept channels keep their order.
pub fn apply_plan(g: &Graph, plan: &PrunePlan) -> Result<Graph> {
    let shapes = g.infer_shapes(g.input.shape())?;
    for (name, shape) in &shapes {
        match plan.keep.get(name) {
            Some(m) if m.len() == shape.c => {}
            Some(m) => {
                return Err(mismatch(format!(
                    "`{name}` has {} channels, mask has {}",
                    shape.c,
                    m.len()
                )))
            }
            None => return Err(mismatch(format!("no mask for `{name}`"))),
        }
    }
    if plan.keep.len() != shapes.len() {
        return Err(mismatch("plan names tensors the graph does not have".into()));
    }
    if !plan.keep[&g.input.name].iter().all(|&k| k) {
        return Err(mismatch("graph input channels cannot be pruned".into()));
    }

    let mut nodes = Vec::with_capacity(g.nodes.len());
    for node in &g.nodes {
        let out_keep = kept_indices(&plan.keep[&node.id]);
        let op = match &node.op {
            Op::Conv2d(conv) => {
                let d = plan
                    .slices
                    .get(&node.id)
                    .ok_or_else(|| mismatch(format!("no slice directive for `{}`", node.id)))?;
                if d.out_channels != out_keep {
                    return Err(mismatch(format!("slice directive for `{}` disagrees with its mask", node.id)));
                }
                let in_keep = kept_indices(&plan.keep[&node.inputs[0]]);
                Op::Conv2d(slice_conv(conv, &out_keep, &in_keep).map_err(|e| Error::at_node(&node.id, e))?)
            }
            Op::BatchNorm(bn) => Op::BatchNorm(BatchNorm {
                gamma: pick(&bn.gamma, &out_keep),
                beta: pick(&bn.beta, &out_keep),
                running_mean: pick(&bn.running_mean, &out_keep),
                running_var: pick(&bn.running_var, &out_keep),
                eps: bn.eps,
            }),
            other => other.clone(),
        };
        nodes.push(Node {
            id: node.id.clone(),
            inputs: node.inputs.clone(),
            op,
        });
    }
    let pruned = Graph {
        nodes,
        ..g.clone()
    };
    pruned.validate()?;
    Ok(pruned)
}

fn slice_conv(conv: &Conv2d, out_keep: &[usize], in_keep: &[usize]) -> Result<Conv2d> {
    let ws = conv.weight.shape();
    let bias = conv.bias.as_ref().map(|b| pick(b, out_keep));
    match conv_kind(conv) {
        ConvKind::Dense => {
            let shape = crate::tensor::Shape4::new(out_keep.len(), in_keep.len(), ws.h, ws.w);
            let weight = Tensor4::from_fn(shape, |o, i, h, w| {
                conv.weight.at(out_keep[o], in_keep[i], h, w)
            });
            Ok(Conv2d {
                weight,
                bias,
                params: conv.params,
            })
        }
        ConvKind::Depthwise => {
            if out_keep != in_keep {
                return Err(Error::InvalidArgument(
                    "depthwise conv input and output masks differ".into(),
                ));
            }
            let weight = conv.weight.select_outer(out_keep)?;
            Ok(Conv2d {
                weight,
                bias,
                params: crate::ops::ConvParams {
                    groups: out_keep.len(),
                    ..conv.params
                },
            })
        }
        ConvKind::Grouped => {
            if out_keep.len() != ws.n || in_keep.len() != ws.c * conv.params.groups {
                return Err(Error::InvalidArgument("grouped conv cannot be pruned".into()));
            }
            Ok(conv.clone())
        }
    }
}
