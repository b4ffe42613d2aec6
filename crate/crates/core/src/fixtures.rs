//! Synthetic networks and inputs for tests, benches and demos.
//!
//! [`SyntheticSpec`] builds GoogLeNet-shaped encoders (Conv-BN-ReLU stems and
//! four-branch inception modules, stages split by stride-2 max pooling) with
//! random weights. [`inject_dead_channels`] then makes chosen relu channels
//! exactly zero for every input by zeroing the producing filter and giving the
//! batch norm a negative constant output.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;

use crate::error::Result;
use crate::graph::{exec, BatchNorm, Conv2d, Graph, GraphBuilder, Op};
use crate::ops::{ConvParams, PoolKind};
use crate::prune::KeepMask;
use crate::tensor::{Shape4, Tensor4};

pub fn random_tensor(shape: Shape4, lo: f32, hi: f32, rng: &mut impl Rng) -> Tensor4 {
    Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(lo..hi))
}

/// Uniform RGB image in [0, 1].
pub fn random_image(height: usize, width: usize, rng: &mut impl Rng) -> Tensor4 {
    random_tensor(Shape4::new(1, 3, height, width), 0.0, 1.0, rng)
}

fn he_uniform(shape: Shape4, rng: &mut impl Rng) -> Tensor4 {
    let fan_in = (shape.c * shape.h * shape.w).max(1) as f32;
    let a = (6.0 / fan_in).sqrt();
    random_tensor(shape, -a, a, rng)
}

fn random_bn(c: usize, rng: &mut impl Rng) -> BatchNorm {
    BatchNorm {
        gamma: (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
        beta: (0..c).map(|_| rng.gen_range(0.05..0.3)).collect(),
        running_mean: (0..c).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        running_var: (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
        eps: 1e-5,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InceptionWidths {
    pub b1: usize,
    pub b2_reduce: usize,
    pub b2: usize,
    pub b3_reduce: usize,
    pub b3: usize,
    pub pool_proj: usize,
}

impl InceptionWidths {
    pub const fn new(b1: usize, b2_reduce: usize, b2: usize, b3_reduce: usize, b3: usize, pool_proj: usize) -> Self {
        Self { b1, b2_reduce, b2, b3_reduce, b3, pool_proj }
    }

    pub fn out_channels(&self) -> usize {
        self.b1 + self.b2 + self.b3 + self.pool_proj
    }

    fn scaled(&self, div: usize) -> Self {
        let s = |v: usize| (v / div).max(2);
        Self::new(s(self.b1), s(self.b2_reduce), s(self.b2), s(self.b3_reduce), s(self.b3), s(self.pool_proj))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    /// Conv-BN-ReLU with "same" padding.
    Conv { out: usize, kernel: usize, stride: usize },
    Inception(InceptionWidths),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub name: String,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    /// Every stage after the first starts with a 3x3 stride-2 max pool.
    pub stages: Vec<Vec<Layer>>,
    /// Optional 1x1 conv (with bias, no activation) appended as the graph output.
    pub head: Option<usize>,
    /// Declare each stage's last tensor as a tap.
    pub declare_taps: bool,
}

impl SyntheticSpec {
    /// GoogLeNet up to inception 4e (16x down-sampling), with every width divided by `div`.
    pub fn googlenet(div: usize, height: usize, width: usize) -> Self {
        let w = |v: usize| (v / div).max(2);
        let inc = |b1, b2r, b2, b3r, b3, bp| Layer::Inception(InceptionWidths::new(b1, b2r, b2, b3r, b3, bp).scaled(div));
        Self {
            name: format!("googlenet-div{div}"),
            in_channels: 3,
            height,
            width,
            stages: vec![
                vec![Layer::Conv { out: w(64), kernel: 7, stride: 2 }],
                vec![
                    Layer::Conv { out: w(64), kernel: 1, stride: 1 },
                    Layer::Conv { out: w(192), kernel: 3, stride: 1 },
                ],
                vec![inc(64, 96, 128, 16, 32, 32), inc(128, 128, 192, 32, 96, 64)],
                vec![
                    inc(192, 96, 208, 16, 48, 64),
                    inc(160, 112, 224, 24, 64, 64),
                    inc(128, 128, 256, 24, 64, 64),
                    inc(112, 144, 288, 32, 64, 64),
                    inc(256, 160, 320, 32, 128, 128),
                ],
            ],
            head: None,
            declare_taps: true,
        }
    }

    /// A small GoogLeNet-shaped net for fast tests: stem, two stages with inception modules.
    pub fn tiny(height: usize, width: usize) -> Self {
        Self {
            name: "tiny-googlenet".into(),
            in_channels: 3,
            height,
            width,
            stages: vec![
                vec![
                    Layer::Conv { out: 8, kernel: 3, stride: 1 },
                    Layer::Conv { out: 12, kernel: 3, stride: 1 },
                ],
                vec![
                    Layer::Inception(InceptionWidths::new(6, 6, 8, 4, 6, 4)),
                    Layer::Inception(InceptionWidths::new(8, 6, 10, 4, 6, 6)),
                ],
                vec![Layer::Inception(InceptionWidths::new(10, 8, 12, 4, 8, 6))],
            ],
            head: Some(8),
            declare_taps: false,
        }
    }
}

/// Where the channels of a conv input come from, in concatenation order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    GraphInput(usize),
    Relu(String),
}

/// Structure of one conv layer, recorded independently of the graph for accounting oracles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvRecord {
    pub conv: String,
    pub bn: Option<String>,
    pub relu: Option<String>,
    pub inputs: Vec<Source>,
    pub out_channels: usize,
    pub kernel: usize,
    pub bias: bool,
}

#[derive(Clone, Debug)]
pub struct SyntheticNet {
    pub graph: Graph,
    pub convs: Vec<ConvRecord>,
    /// Last tensor of every stage, in order.
    pub stage_outputs: Vec<String>,
}

impl SyntheticNet {
    pub fn relus(&self) -> impl Iterator<Item = &ConvRecord> {
        self.convs.iter().filter(|c| c.relu.is_some())
    }
}

struct Builder<'r, R: Rng> {
    b: GraphBuilder,
    rng: &'r mut R,
    convs: Vec<ConvRecord>,
}

impl<R: Rng> Builder<'_, R> {
    fn conv_bn_relu(&mut self, id: &str, input: &str, sources: Vec<Source>, cin: usize, out: usize, kernel: usize, stride: usize) -> String {
        let weight = he_uniform(Shape4::new(out, cin, kernel, kernel), self.rng);
        let conv = format!("{id}.conv");
        let bn = format!("{id}.bn");
        let relu = format!("{id}.relu");
        self.b.conv(&conv, input, weight, None, ConvParams { stride, padding: kernel / 2, groups: 1 });
        let params = random_bn(out, self.rng);
        self.b.batch_norm(&bn, &conv, params);
        self.b.relu(&relu, &bn);
        self.convs.push(ConvRecord {
            conv,
            bn: Some(bn),
            relu: Some(relu.clone()),
            inputs: sources,
            out_channels: out,
            kernel,
            bias: false,
        });
        relu
    }
}

/// Builds the network described by `spec` with random weights.
pub fn synthetic_net(spec: &SyntheticSpec, rng: &mut impl Rng) -> Result<SyntheticNet> {
    let mut bld = Builder {
        b: GraphBuilder::new(&spec.name, "image", spec.in_channels, spec.height, spec.width),
        rng,
        convs: Vec::new(),
    };
    let mut cur = "image".to_string();
    let mut cur_c = spec.in_channels;
    let mut sources = vec![Source::GraphInput(spec.in_channels)];
    let mut stage_outputs = Vec::new();
    for (s, stage) in spec.stages.iter().enumerate() {
        if s > 0 {
            cur = bld.b.pool(&format!("pool{s}"), &cur, PoolKind::Max, 3, 2, 1);
        }
        for (l, layer) in stage.iter().enumerate() {
            let id = format!("s{s}.l{l}");
            match *layer {
                Layer::Conv { out, kernel, stride } => {
                    let relu = bld.conv_bn_relu(&id, &cur, sources.clone(), cur_c, out, kernel, stride);
                    sources = vec![Source::Relu(relu.clone())];
                    cur = relu;
                    cur_c = out;
                }
                Layer::Inception(w) => {
                    let b1 = bld.conv_bn_relu(&format!("{id}.b1"), &cur, sources.clone(), cur_c, w.b1, 1, 1);
                    let r2 = bld.conv_bn_relu(&format!("{id}.b2r"), &cur, sources.clone(), cur_c, w.b2_reduce, 1, 1);
                    let b2 = bld.conv_bn_relu(&format!("{id}.b2"), &r2, vec![Source::Relu(r2.clone())], w.b2_reduce, w.b2, 3, 1);
                    let r3 = bld.conv_bn_relu(&format!("{id}.b3r"), &cur, sources.clone(), cur_c, w.b3_reduce, 1, 1);
                    let b3 = bld.conv_bn_relu(&format!("{id}.b3"), &r3, vec![Source::Relu(r3.clone())], w.b3_reduce, w.b3, 3, 1);
                    let pool = bld.b.pool(&format!("{id}.b4pool"), &cur, PoolKind::Max, 3, 1, 1);
                    let b4 = bld.conv_bn_relu(&format!("{id}.b4"), &pool, sources.clone(), cur_c, w.pool_proj, 1, 1);
                    cur = bld.b.concat(&format!("{id}.cat"), &[&b1, &b2, &b3, &b4]);
                    cur_c = w.out_channels();
                    sources = [b1, b2, b3, b4].into_iter().map(Source::Relu).collect();
                }
            }
        }
        stage_outputs.push(cur.clone());
        if spec.declare_taps {
            bld.b.tap(&cur);
        }
    }
    if let Some(out) = spec.head {
        let weight = he_uniform(Shape4::new(out, cur_c, 1, 1), bld.rng);
        let bias = (0..out).map(|_| bld.rng.gen_range(-0.1..0.1)).collect();
        bld.b.conv("head", &cur, weight, Some(bias), ConvParams::default());
        bld.b.output("head");
        bld.convs.push(ConvRecord {
            conv: "head".into(),
            bn: None,
            relu: None,
            inputs: sources,
            out_channels: out,
            kernel: 1,
            bias: true,
        });
    } else {
        bld.b.output(&cur);
    }
    let mut graph = bld.b.finish()?;
    let imgs = fit_images(&graph, bld.rng);
    fit_batch_norm(&mut graph, &imgs, &BTreeSet::new())?;
    Ok(SyntheticNet {
        graph,
        convs: bld.convs,
        stage_outputs,
    })
}

/// Sets every batch norm's running statistics to the population mean and
/// variance of its input over `inputs`, and shifts beta so each channel is
/// positive on about 80% of the observed positions. Channels listed in
/// `frozen` (bn id, channel) keep their values.
pub fn fit_batch_norm(g: &mut Graph, inputs: &[Tensor4], frozen: &BTreeSet<(String, usize)>) -> Result<()> {
    let opts = exec::ExecOptions::default();
    let mut acts: HashMap<String, Vec<Tensor4>> = HashMap::new();
    acts.insert(g.input.name.clone(), inputs.to_vec());
    for i in 0..g.nodes.len() {
        if let Op::BatchNorm(_) = g.nodes[i].op {
            let x = &acts[&g.nodes[i].inputs[0]];
            let c = x[0].shape().c;
            let mut stats = Vec::with_capacity(c);
            for ch in 0..c {
                let mut vals: Vec<f64> = x.iter().flat_map(|t| t.plane(0, ch).iter().map(|&v| v as f64)).collect();
                let n = vals.len() as f64;
                let m = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                vals.sort_by(f64::total_cmp);
                let q20 = vals[vals.len() / 5];
                let z20 = if var > 0.0 { (q20 - m) / var.sqrt() } else { 0.0 };
                stats.push((m as f32, var as f32, z20 as f32));
            }
            let id = g.nodes[i].id.clone();
            if let Op::BatchNorm(bn) = &mut g.nodes[i].op {
                for (ch, (m, var, z20)) in stats.into_iter().enumerate() {
                    if !frozen.contains(&(id.clone(), ch)) {
                        bn.running_mean[ch] = m;
                        bn.running_var[ch] = var;
                        bn.beta[ch] = bn.gamma[ch] * (0.05 - z20);
                    }
                }
            }
        }
        let node = &g.nodes[i];
        let ins: Vec<&Vec<Tensor4>> = node.inputs.iter().map(|id| &acts[id]).collect();
        let out = (0..inputs.len())
            .map(|k| {
                let xs: Vec<&Tensor4> = ins.iter().map(|v| &v[k]).collect();
                exec::eval(&node.op, &xs, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        acts.insert(node.id.clone(), out);
    }
    Ok(())
}

fn fit_images(g: &Graph, rng: &mut impl Rng) -> Vec<Tensor4> {
    let s = g.input.shape();
    (0..8).map(|_| random_tensor(s, 0.0, 1.0, rng)).collect()
}

fn node_op_mut<'g>(g: &'g mut Graph, id: &str) -> &'g mut Op {
    &mut g
        .nodes
        .iter_mut()
        .find(|n| n.id == id)
        .unwrap_or_else(|| panic!("no node `{id}`"))
        .op
}

/// Makes `channel` of the relu fed by `conv -> bn` zero for every input.
pub fn kill_channel(g: &mut Graph, conv: &str, bn: Option<&str>, channel: usize, rng: &mut impl Rng) {
    let negative = -rng.gen_range(0.1f32..1.0);
    if let Op::Conv2d(Conv2d { weight, bias, .. }) = node_op_mut(g, conv) {
        let s = weight.shape();
        let inner = s.c * s.h * s.w;
        let mut data = weight.clone().into_data();
        data[channel * inner..(channel + 1) * inner].fill(0.0);
        *weight = Tensor4::from_vec(s, data).expect("same shape");
        match (bias.as_mut(), bn) {
            (Some(b), Some(_)) => b[channel] = 0.0,
            (Some(b), None) => b[channel] = negative,
            (None, _) => {}
        }
    }
    if let Some(bn) = bn {
        if let Op::BatchNorm(p) = node_op_mut(g, bn) {
            p.running_mean[channel] = 0.0;
            p.beta[channel] = negative;
        }
    }
}

/// Kills a random 20-40% (`lo..=hi`) of the channels of every relu and returns
/// the injected masks keyed by relu id. At least one channel always survives.
pub fn inject_dead_channels(net: &mut SyntheticNet, lo: f64, hi: f64, rng: &mut impl Rng) -> BTreeMap<String, KeepMask> {
    let mut masks = BTreeMap::new();
    let mut frozen = BTreeSet::new();
    let records: Vec<ConvRecord> = net.relus().cloned().collect();
    for rec in records {
        let relu = rec.relu.as_deref().expect("filtered");
        let c = rec.out_channels;
        let frac = rng.gen_range(lo..=hi);
        let kill = ((frac * c as f64).round() as usize).min(c - 1);
        let dead = rand::seq::index::sample(rng, c, kill).into_vec();
        let mut bits = vec![true; c];
        for &d in &dead {
            bits[d] = false;
            kill_channel(&mut net.graph, &rec.conv, rec.bn.as_deref(), d, rng);
            if let Some(bn) = &rec.bn {
                frozen.insert((bn.clone(), d));
            }
        }
        masks.insert(relu.to_string(), KeepMask::new(relu, bits).expect("one channel kept"));
    }
    // Re-center the live channels on the thinned activations.
    let imgs = fit_images(&net.graph, rng);
    fit_batch_norm(&mut net.graph, &imgs, &frozen).expect("fixture graph executes");
    masks
}

fn identity_weight(c: usize) -> Tensor4 {
    Tensor4::from_fn(Shape4::new(c, c, 1, 1), |o, i, _, _| if o == i { 1.0 } else { 0.0 })
}

/// Encoder and decoder that are both a single identity 1x1 conv over RGB.
pub fn identity_autoencoder(height: usize, width: usize) -> Result<(Graph, Graph)> {
    let mut e = GraphBuilder::new("identity-encoder", "image", 3, height, width);
    e.conv("features", "image", identity_weight(3), None, ConvParams::default());
    e.tap("features");
    e.output("features");
    let mut d = GraphBuilder::new("identity-decoder", "features", 3, height, width);
    d.conv("image_out", "features", identity_weight(3), None, ConvParams::default());
    d.output("image_out");
    Ok((e.finish()?, d.finish()?))
}

/// Toy autoencoder with two encoder blocks (taps at 1x and 2x down-sampling)
/// and interior relus, one channel of each made dead. Returns (encoder, decoder).
pub fn toy_autoencoder(height: usize, width: usize, rng: &mut impl Rng) -> Result<(Graph, Graph)> {
    let mut bld = Builder {
        b: GraphBuilder::new("toy-encoder", "image", 3, height, width),
        rng,
        convs: Vec::new(),
    };
    let img = vec![Source::GraphInput(3)];
    let a = bld.conv_bn_relu("b1.l0", "image", img, 3, 8, 3, 1);
    let t1 = bld.conv_bn_relu("b1.l1", &a, vec![], 8, 8, 3, 1);
    let p = bld.b.pool("pool1", &t1, PoolKind::Max, 2, 2, 0);
    let c = bld.conv_bn_relu("b2.l0", &p, vec![], 8, 12, 3, 1);
    let t2 = bld.conv_bn_relu("b2.l1", &c, vec![], 12, 16, 3, 1);
    bld.b.tap(&t1);
    bld.b.tap(&t2);
    bld.b.output(&t2);
    let mut enc = bld.b.finish()?;
    let mut frozen = BTreeSet::new();
    for (conv, bn, ch) in [("b1.l0.conv", "b1.l0.bn", 2), ("b1.l0.conv", "b1.l0.bn", 5), ("b2.l0.conv", "b2.l0.bn", 7)] {
        kill_channel(&mut enc, conv, Some(bn), ch, bld.rng);
        frozen.insert((bn.to_string(), ch));
    }
    let imgs = fit_images(&enc, bld.rng);
    fit_batch_norm(&mut enc, &imgs, &frozen)?;

    let rng = bld.rng;
    let mut d = GraphBuilder::new("toy-decoder", "bottleneck", 16, height / 2, width / 2);
    d.conv("d1", "bottleneck", he_uniform(Shape4::new(8, 16, 3, 3), rng), Some(vec![0.05; 8]), ConvParams { padding: 1, ..Default::default() });
    d.relu("d1.relu", "d1");
    d.upsample("up", "d1.relu", 2);
    d.conv("rgb", "up", he_uniform(Shape4::new(3, 8, 3, 3), rng), Some(vec![0.5; 3]), ConvParams { padding: 1, ..Default::default() });
    d.output("rgb");
    Ok((enc, d.finish()?))
}
