//! Parameter and FLOP accounting.
//!
//! FLOPs count one multiply-accumulate as two operations. Per node:
//! conv `2 * Kh * Kw * (Cin / groups) * Cout * Hout * Wout`, batch norm 2 per
//! element, activations and add 1 per element, pooling `kernel^2` per output
//! element, upsample and concat 0.

use super::{Graph, Op};
use crate::error::Result;
use crate::tensor::Shape4;

/// Weight elements plus conv biases plus four vectors per batch norm.
pub fn count_params(g: &Graph) -> u64 {
    g.nodes
        .iter()
        .map(|n| match &n.op {
            Op::Conv2d(c) => {
                (c.weight.shape().numel() + c.bias.as_ref().map_or(0, Vec::len)) as u64
            }
            Op::BatchNorm(bn) => 4 * bn.channels() as u64,
            _ => 0,
        })
        .sum()
}

/// Parameter storage in megabytes of 32-bit floats (1 MB = 10^6 bytes).
pub fn param_megabytes(params: u64) -> f64 {
    params as f64 * 4.0 / 1e6
}

pub fn count_flops(g: &Graph, input: Shape4) -> Result<u64> {
    let shapes = g.infer_shapes(input)?;
    let mut total = 0u64;
    for node in &g.nodes {
        let out = shapes[&node.id];
        let elems = out.numel() as u64;
        total += match &node.op {
            Op::Conv2d(c) => {
                let w = c.weight.shape();
                2 * (w.h * w.w * w.c) as u64 * elems
            }
            Op::BatchNorm(_) => 2 * elems,
            Op::Activation(_) | Op::Add => elems,
            Op::Pool { params, .. } => (params.kernel * params.kernel) as u64 * elems,
            Op::Upsample { .. } | Op::Concat => 0,
        };
    }
    Ok(total)
}
