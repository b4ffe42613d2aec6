//! Computation graphs: node model, validation and shape inference.
//!
//! A [`Graph`] is a list of nodes in topological order. Nodes reference their
//! inputs by id; the single graph input is referenced by its declared name.

mod count;
pub(crate) mod exec;
mod format;

pub use count::{count_flops, count_params, param_megabytes};
pub use exec::{execute, execute_with, ExecOptions};
pub use format::{
    load_model, load_model_dir, save_model, save_model_dir, BlobRef, Manifest, ManifestInput,
    ManifestNode, NodeAttrs, FORMAT_VERSION, MANIFEST_FILE, WEIGHTS_FILE,
};

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{self, Activation, ConvParams, PoolKind, PoolParams};
use crate::tensor::{Shape4, Tensor4};

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    /// Laid out (O, I/groups, Kh, Kw).
    pub weight: Tensor4,
    pub bias: Option<Vec<f32>>,
    pub params: ConvParams,
}

impl Conv2d {
    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    /// Depthwise with multiplier one: every output channel reads exactly its own input channel.
    pub fn is_depthwise(&self) -> bool {
        let s = self.weight.shape();
        self.params.groups > 1 && s.c == 1 && s.n == self.params.groups
    }

    pub fn is_dense(&self) -> bool {
        self.params.groups == 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
}

impl BatchNorm {
    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Conv2d(Conv2d),
    BatchNorm(BatchNorm),
    Activation(Activation),
    Pool { kind: PoolKind, params: PoolParams },
    Upsample { factor: usize },
    Concat,
    Add,
}

impl Op {
    /// The op name used in model manifests and reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Conv2d(_) => "conv2d",
            Op::BatchNorm(_) => "batch_norm",
            Op::Activation(Activation::Relu) => "relu",
            Op::Activation(Activation::Relu6) => "relu6",
            Op::Pool { kind: PoolKind::Max, .. } => "maxpool",
            Op::Pool { kind: PoolKind::Avg, .. } => "avgpool",
            Op::Upsample { .. } => "upsample",
            Op::Concat => "concat",
            Op::Add => "add",
        }
    }

    pub fn is_activation(&self) -> bool {
        matches!(self, Op::Activation(_))
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            Op::Concat => n >= 1,
            Op::Add => n == 2,
            _ => n == 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: String,
    pub inputs: Vec<String>,
    pub op: Op,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

/// The graph input. Height and width are the nominal size used for
/// validation and accounting; execution accepts any spatial size that shape
/// inference admits.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSpec {
    pub name: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputSpec {
    pub fn shape(&self) -> Shape4 {
        Shape4::new(1, self.channels, self.height, self.width)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub name: String,
    pub input: InputSpec,
    pub preprocessing: Option<Preprocessing>,
    pub nodes: Vec<Node>,
    pub outputs: Vec<String>,
    /// Feature taps consumed by downstream tooling. Pruning never changes their width.
    pub taps: Vec<String>,
}

impl Graph {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_index(&self) -> HashMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect()
    }

    /// Whether `id` names the graph input or a node.
    pub fn has_tensor(&self, id: &str) -> bool {
        id == self.input.name || self.node(id).is_some()
    }

    /// Consumers of every tensor, as node indices in graph order.
    pub fn consumers(&self) -> HashMap<&str, Vec<usize>> {
        let mut map: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            for input in &node.inputs {
                let list = map.entry(input.as_str()).or_default();
                if list.last() != Some(&i) {
                    list.push(i);
                }
            }
        }
        map
    }

    /// Structural checks followed by shape inference at the declared input size.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Validation(format!("graph `{}` has no nodes", self.name)));
        }
        if self.input.channels == 0 || self.input.height == 0 || self.input.width == 0 {
            return Err(Error::Validation(format!(
                "input `{}` has an empty declared shape",
                self.input.name
            )));
        }
        if let Some(pre) = &self.preprocessing {
            if pre.mean.len() != self.input.channels || pre.std.len() != self.input.channels {
                return Err(Error::Validation(format!(
                    "preprocessing has {} means and {} stds for {} input channels",
                    pre.mean.len(),
                    pre.std.len(),
                    self.input.channels
                )));
            }
            if pre.std.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::Validation("preprocessing std must be positive".into()));
            }
        }
        let mut seen: HashSet<&str> = HashSet::new();
        seen.insert(&self.input.name);
        for node in &self.nodes {
            if !seen.insert(&node.id) {
                return Err(Error::Validation(format!("duplicate tensor id `{}`", node.id)));
            }
            if !node.op.arity_ok(node.inputs.len()) {
                return Err(Error::at_node(
                    &node.id,
                    Error::Validation(format!(
                        "{} cannot take {} inputs",
                        node.op.kind(),
                        node.inputs.len()
                    )),
                ));
            }
            for input in &node.inputs {
                if input == &node.id || !seen.contains(input.as_str()) {
                    return Err(Error::at_node(
                        &node.id,
                        Error::Validation(format!(
                            "input `{input}` is not produced by an earlier node"
                        )),
                    ));
                }
            }
        }
        if self.outputs.is_empty() {
            return Err(Error::Validation("graph declares no outputs".into()));
        }
        for id in self.outputs.iter().chain(&self.taps) {
            if !seen.contains(id.as_str()) {
                return Err(Error::Validation(format!("output or tap `{id}` does not exist")));
            }
        }
        self.infer_shapes(self.input.shape()).map(|_| ())
    }

    /// Shapes of the input and every node output for a given input shape.
    pub fn infer_shapes(&self, input: Shape4) -> Result<BTreeMap<String, Shape4>> {
        if input.n != 1 {
            return Err(Error::Shape(format!(
                "batch size is fixed to 1, got input {input}"
            )));
        }
        if input.c != self.input.channels {
            return Err(Error::Shape(format!(
                "input `{}` declares {} channels, got {input}",
                self.input.name, self.input.channels
            )));
        }
        let mut shapes = BTreeMap::new();
        shapes.insert(self.input.name.clone(), input);
        for node in &self.nodes {
            let ins = node
                .inputs
                .iter()
                .map(|i| {
                    shapes.get(i).copied().ok_or_else(|| {
                        Error::at_node(&node.id, Error::Validation(format!("unknown input `{i}`")))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let out = node_shape(&node.op, &ins).map_err(|e| Error::at_node(&node.id, e))?;
            shapes.insert(node.id.clone(), out);
        }
        Ok(shapes)
    }

    /// Cumulative spatial stride at `id`, the largest over all paths from the input.
    pub fn total_stride(&self, id: &str) -> Result<usize> {
        let mut strides: HashMap<&str, (usize, usize)> = HashMap::new();
        strides.insert(&self.input.name, (1, 1));
        for node in &self.nodes {
            let (num, den) = node
                .inputs
                .iter()
                .filter_map(|i| strides.get(i.as_str()))
                .fold((1, 1), |acc, &s| if s.0 * acc.1 > acc.0 * s.1 { s } else { acc });
            let (num, den) = match &node.op {
                Op::Conv2d(c) => (num * c.params.stride, den),
                Op::Pool { params, .. } => (num * params.stride, den),
                Op::Upsample { factor } => (num, den * factor),
                _ => (num, den),
            };
            strides.insert(&node.id, (num, den));
        }
        let (num, den) = strides
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownTap(id.to_string()))?;
        Ok(num.div_ceil(den).max(1))
    }
}

pub(crate) fn node_shape(op: &Op, ins: &[Shape4]) -> Result<Shape4> {
    let first = ins[0];
    match op {
        Op::Conv2d(c) => ops::conv2d_shape(first, c.weight.shape(), c.params),
        Op::BatchNorm(bn) => {
            let n = bn.channels();
            if [&bn.beta, &bn.running_mean, &bn.running_var]
                .iter()
                .any(|v| v.len() != n)
            {
                return Err(Error::Shape("batch_norm parameter lengths differ".into()));
            }
            if n != first.c {
                return Err(Error::Shape(format!(
                    "batch_norm has {n} channels, input {first}"
                )));
            }
            Ok(first)
        }
        Op::Activation(_) => Ok(first),
        Op::Pool { params, .. } => ops::pool_shape(first, *params),
        Op::Upsample { factor } => {
            if *factor == 0 {
                return Err(Error::InvalidArgument("upsample factor must be >= 1".into()));
            }
            Ok(Shape4::new(first.n, first.c, first.h * factor, first.w * factor))
        }
        Op::Concat => {
            let mut c = 0;
            for s in ins {
                if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
                    return Err(Error::Shape(format!("concat inputs disagree: {first} vs {s}")));
                }
                c += s.c;
            }
            Ok(first.with_channels(c))
        }
        Op::Add => {
            if ins[1] != first {
                return Err(Error::Shape(format!(
                    "add inputs disagree: {first} vs {}",
                    ins[1]
                )));
            }
            Ok(first)
        }
    }
}

/// Incremental graph construction. Ids must be unique; inputs must already exist.
#[derive(Clone, Debug)]
pub struct GraphBuilder {
    graph: Graph,
}

impl GraphBuilder {
    pub fn new(name: &str, input: &str, channels: usize, height: usize, width: usize) -> Self {
        Self {
            graph: Graph {
                name: name.to_string(),
                input: InputSpec {
                    name: input.to_string(),
                    channels,
                    height,
                    width,
                },
                preprocessing: None,
                nodes: Vec::new(),
                outputs: Vec::new(),
                taps: Vec::new(),
            },
        }
    }

    pub fn input_name(&self) -> &str {
        &self.graph.input.name
    }

    pub fn preprocessing(mut self, pre: Preprocessing) -> Self {
        self.graph.preprocessing = Some(pre);
        self
    }

    pub fn push(&mut self, id: &str, inputs: &[&str], op: Op) -> String {
        self.graph.nodes.push(Node {
            id: id.to_string(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            op,
        });
        id.to_string()
    }

    pub fn conv(
        &mut self,
        id: &str,
        input: &str,
        weight: Tensor4,
        bias: Option<Vec<f32>>,
        params: ConvParams,
    ) -> String {
        self.push(id, &[input], Op::Conv2d(Conv2d { weight, bias, params }))
    }

    pub fn batch_norm(&mut self, id: &str, input: &str, bn: BatchNorm) -> String {
        self.push(id, &[input], Op::BatchNorm(bn))
    }

    pub fn relu(&mut self, id: &str, input: &str) -> String {
        self.push(id, &[input], Op::Activation(Activation::Relu))
    }

    pub fn relu6(&mut self, id: &str, input: &str) -> String {
        self.push(id, &[input], Op::Activation(Activation::Relu6))
    }

    pub fn pool(&mut self, id: &str, input: &str, kind: PoolKind, kernel: usize, stride: usize, padding: usize) -> String {
        self.push(
            id,
            &[input],
            Op::Pool {
                kind,
                params: PoolParams { kernel, stride, padding },
            },
        )
    }

    pub fn upsample(&mut self, id: &str, input: &str, factor: usize) -> String {
        self.push(id, &[input], Op::Upsample { factor })
    }

    pub fn concat(&mut self, id: &str, inputs: &[&str]) -> String {
        self.push(id, inputs, Op::Concat)
    }

    pub fn add(&mut self, id: &str, a: &str, b: &str) -> String {
        self.push(id, &[a, b], Op::Add)
    }

    pub fn output(&mut self, id: &str) {
        self.graph.outputs.push(id.to_string());
    }

    pub fn tap(&mut self, id: &str) {
        self.graph.taps.push(id.to_string());
    }

    pub fn finish(self) -> Result<Graph> {
        self.graph.validate()?;
        Ok(self.graph)
    }

    /// The graph without validation, for tests that need malformed graphs.
    pub fn finish_unchecked(self) -> Graph {
        self.graph
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_conv(c: usize) -> Tensor4 {
        Tensor4::from_fn(Shape4::new(c, c, 1, 1), |o, i, _, _| if o == i { 1.0 } else { 0.0 })
    }

    #[test]
    fn empty_graph_rejected() {
        let b = GraphBuilder::new("empty", "x", 3, 4, 4);
        assert!(matches!(b.finish(), Err(Error::Validation(_))));
    }

    #[test]
    fn forward_reference_rejected() {
        let mut b = GraphBuilder::new("g", "x", 1, 4, 4);
        b.relu("a", "b");
        b.relu("b", "x");
        b.output("b");
        let err = b.finish().unwrap_err();
        assert!(err.to_string().contains("`a`"), "{err}");
    }

    #[test]
    fn shape_errors_name_the_node() {
        let mut b = GraphBuilder::new("g", "x", 3, 4, 4);
        b.conv("c1", "x", identity_conv(2), None, ConvParams::default());
        b.output("c1");
        let err = b.finish().unwrap_err();
        assert!(matches!(err, Error::AtNode { ref node, .. } if node == "c1"), "{err}");
    }

    #[test]
    fn total_stride_tracks_pools_and_upsampling() {
        let mut b = GraphBuilder::new("g", "x", 1, 16, 16);
        b.conv("c", "x", identity_conv(1), None, ConvParams { stride: 2, ..Default::default() });
        b.pool("p", "c", PoolKind::Max, 2, 2, 0);
        b.upsample("u", "p", 2);
        b.output("u");
        let g = b.finish().unwrap();
        assert_eq!(g.total_stride("x").unwrap(), 1);
        assert_eq!(g.total_stride("c").unwrap(), 2);
        assert_eq!(g.total_stride("p").unwrap(), 4);
        assert_eq!(g.total_stride("u").unwrap(), 2);
    }

    #[test]
    fn consumers_listed_once_per_node() {
        let mut b = GraphBuilder::new("g", "x", 2, 4, 4);
        b.add("a", "x", "x");
        b.relu("r", "a");
        b.output("r");
        let g = b.finish().unwrap();
        let cons = g.consumers();
        assert_eq!(cons["x"], vec![0]);
        assert_eq!(cons["a"], vec![1]);
    }
}
