//! Numeric kernels used by graph nodes.
//!
//! Every kernel is a pure function with a fixed summation order so that a
//! pruned and an unpruned network produce bit-identical values on the
//! channels they share. `conv2d` accumulates each output element as
//! `bias + sum_i sum_kh sum_kw w * x`, iterating `i`, then `kh`, then `kw`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for ConvParams {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Relu6,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolParams {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

fn out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output shape of a convolution, or a description of why it is invalid.
pub fn conv2d_shape(x: Shape4, weight: Shape4, p: ConvParams) -> Result<Shape4> {
    if p.groups == 0 || p.stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "conv2d needs stride >= 1 and groups >= 1, got stride {} groups {}",
            p.stride, p.groups
        )));
    }
    if x.c % p.groups != 0 || weight.n % p.groups != 0 {
        return Err(Error::Shape(format!(
            "groups {} must divide input channels {} and output channels {}",
            p.groups, x.c, weight.n
        )));
    }
    if weight.c * p.groups != x.c {
        return Err(Error::Shape(format!(
            "weight {} expects {} input channels with groups {}, input has {}",
            weight,
            weight.c * p.groups,
            p.groups,
            x.c
        )));
    }
    let h = out_dim(x.h, weight.h, p.stride, p.padding);
    let w = out_dim(x.w, weight.w, p.stride, p.padding);
    match (h, w) {
        (Some(h), Some(w)) => Ok(Shape4::new(x.n, weight.n, h, w)),
        _ => Err(Error::Shape(format!(
            "kernel {}x{} with padding {} does not fit input {}",
            weight.h, weight.w, p.padding, x
        ))),
    }
}

/// 2-D cross-correlation with zero padding. `weight` is laid out (O, I/groups, Kh, Kw).
pub fn conv2d(x: &Tensor4, weight: &Tensor4, bias: Option<&[f32]>, p: ConvParams) -> Result<Tensor4> {
    conv2d_exec(x, weight, bias, p, false)
}

/// Range of output columns whose input column `ow * stride + k - pad` lands in `0..len`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // ow * stride + k >= pad
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    // ow * stride + k - pad <= in_len - 1
    let limit = in_len + pad;
    let hi = if limit > k { (limit - k - 1) / stride + 1 } else { 0 };
    (lo.min(out_len), hi.min(out_len))
}

pub(crate) fn conv2d_exec(
    x: &Tensor4,
    weight: &Tensor4,
    bias: Option<&[f32]>,
    p: ConvParams,
    parallel: bool,
) -> Result<Tensor4> {
    let xs = x.shape();
    let ws = weight.shape();
    let os = conv2d_shape(xs, ws, p)?;
    if let Some(b) = bias {
        if b.len() != ws.n {
            return Err(Error::Shape(format!(
                "bias has {} entries for {} output channels",
                b.len(),
                ws.n
            )));
        }
    }
    let out_per_group = ws.n / p.groups;
    let in_per_group = ws.c;
    let plane_out = os.plane();
    let mut out = Tensor4::zeros(os);

    let compute = |n: usize, o: usize, dst: &mut [f32]| {
        dst.fill(bias.map_or(0.0, |b| b[o]));
        let group = o / out_per_group;
        for i in 0..in_per_group {
            let src = x.plane(n, group * in_per_group + i);
            for kh in 0..ws.h {
                let (oh_lo, oh_hi) = valid_range(os.h, xs.h, kh, p.stride, p.padding);
                for kw in 0..ws.w {
                    let wv = weight.at(o, i, kh, kw);
                    let (ow_lo, ow_hi) = valid_range(os.w, xs.w, kw, p.stride, p.padding);
                    if ow_lo >= ow_hi {
                        continue;
                    }
                    for oh in oh_lo..oh_hi {
                        let ih = oh * p.stride + kh - p.padding;
                        let row = &src[ih * xs.w..(ih + 1) * xs.w];
                        let drow = &mut dst[oh * os.w..(oh + 1) * os.w];
                        if p.stride == 1 {
                            let start = ow_lo + kw - p.padding;
                            let srow = &row[start..start + (ow_hi - ow_lo)];
                            for (d, s) in drow[ow_lo..ow_hi].iter_mut().zip(srow) {
                                *d += wv * s;
                            }
                        } else {
                            for ow in ow_lo..ow_hi {
                                drow[ow] += wv * row[ow * p.stride + kw - p.padding];
                            }
                        }
                    }
                }
            }
        }
    };

    if parallel {
        out.data_mut()
            .par_chunks_mut(plane_out.max(1))
            .enumerate()
            .for_each(|(idx, dst)| compute(idx / os.c, idx % os.c, dst));
    } else {
        for n in 0..os.n {
            for o in 0..os.c {
                compute(n, o, out.plane_mut(n, o));
            }
        }
    }
    Ok(out)
}

/// Inference-mode batch normalization: `(x - mean) * gamma / sqrt(var + eps) + beta`.
pub fn batch_norm(
    x: &Tensor4,
    gamma: &[f32],
    beta: &[f32],
    running_mean: &[f32],
    running_var: &[f32],
    eps: f32,
) -> Result<Tensor4> {
    let s = x.shape();
    for (name, v) in [
        ("gamma", gamma),
        ("beta", beta),
        ("running_mean", running_mean),
        ("running_var", running_var),
    ] {
        if v.len() != s.c {
            return Err(Error::Shape(format!(
                "batch_norm {name} has {} entries for {} channels",
                v.len(),
                s.c
            )));
        }
    }
    if let Some((c, v)) = running_var.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "batch_norm running_var[{c}] = {v} is negative"
        )));
    }
    let mut out = x.clone();
    for n in 0..s.n {
        for c in 0..s.c {
            let scale = gamma[c] / (running_var[c] + eps).sqrt();
            let (m, b) = (running_mean[c], beta[c]);
            for v in out.plane_mut(n, c) {
                *v = (*v - m) * scale + b;
            }
        }
    }
    Ok(out)
}

pub fn activation(x: &Tensor4, kind: Activation) -> Tensor4 {
    match kind {
        Activation::Relu => x.map(|v| v.max(0.0)),
        Activation::Relu6 => x.map(|v| v.max(0.0).min(6.0)),
    }
}

pub fn pool_shape(x: Shape4, p: PoolParams) -> Result<Shape4> {
    if p.padding >= p.kernel.max(1) {
        return Err(Error::InvalidArgument(format!(
            "pool padding {} must be smaller than kernel {}",
            p.padding, p.kernel
        )));
    }
    match (
        out_dim(x.h, p.kernel, p.stride, p.padding),
        out_dim(x.w, p.kernel, p.stride, p.padding),
    ) {
        (Some(h), Some(w)) => Ok(Shape4::new(x.n, x.c, h, w)),
        _ => Err(Error::Shape(format!(
            "pool kernel {} stride {} padding {} does not fit input {}",
            p.kernel, p.stride, p.padding, x
        ))),
    }
}

/// Max or average pooling. Max ignores padded positions; average counts them as zeros.
/// Windows are scanned row-major.
pub fn pool(x: &Tensor4, kind: PoolKind, p: PoolParams) -> Result<Tensor4> {
    let xs = x.shape();
    let os = pool_shape(xs, p)?;
    let mut out = Tensor4::zeros(os);
    let area = (p.kernel * p.kernel) as f32;
    for n in 0..xs.n {
        for c in 0..xs.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oh in 0..os.h {
                for ow in 0..os.w {
                    let mut acc = match kind {
                        PoolKind::Max => f32::NEG_INFINITY,
                        PoolKind::Avg => 0.0,
                    };
                    for kh in 0..p.kernel {
                        let ih = (oh * p.stride + kh) as isize - p.padding as isize;
                        if ih < 0 || ih >= xs.h as isize {
                            continue;
                        }
                        for kw in 0..p.kernel {
                            let iw = (ow * p.stride + kw) as isize - p.padding as isize;
                            if iw < 0 || iw >= xs.w as isize {
                                continue;
                            }
                            let v = src[ih as usize * xs.w + iw as usize];
                            match kind {
                                PoolKind::Max => acc = acc.max(v),
                                PoolKind::Avg => acc += v,
                            }
                        }
                    }
                    dst[oh * os.w + ow] = match kind {
                        PoolKind::Max => acc,
                        PoolKind::Avg => acc / area,
                    };
                }
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour upsampling: every pixel becomes a `factor x factor` block.
pub fn upsample_nearest(x: &Tensor4, factor: usize) -> Result<Tensor4> {
    if factor == 0 {
        return Err(Error::InvalidArgument("upsample factor must be >= 1".into()));
    }
    let xs = x.shape();
    let os = Shape4::new(xs.n, xs.c, xs.h * factor, xs.w * factor);
    let mut out = Tensor4::zeros(os);
    for n in 0..xs.n {
        for c in 0..xs.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oh in 0..os.h {
                let srow = &src[(oh / factor) * xs.w..(oh / factor + 1) * xs.w];
                for (ow, d) in dst[oh * os.w..(oh + 1) * os.w].iter_mut().enumerate() {
                    *d = srow[ow / factor];
                }
            }
        }
    }
    Ok(out)
}

pub fn concat_channels(xs: &[&Tensor4]) -> Result<Tensor4> {
    let first = xs
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat needs at least one input".into()))?
        .shape();
    let mut channels = 0;
    for t in xs {
        let s = t.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::Shape(format!(
                "concat inputs disagree: {first} vs {s}"
            )));
        }
        channels += s.c;
    }
    let os = first.with_channels(channels);
    let mut data = Vec::with_capacity(os.numel());
    for n in 0..os.n {
        for t in xs {
            for c in 0..t.shape().c {
                data.extend_from_slice(t.plane(n, c));
            }
        }
    }
    Tensor4::from_vec(os, data)
}

pub fn add(x: &Tensor4, y: &Tensor4) -> Result<Tensor4> {
    if x.shape() != y.shape() {
        return Err(Error::Shape(format!(
            "add inputs disagree: {} vs {}",
            x.shape(),
            y.shape()
        )));
    }
    let data = x.data().iter().zip(y.data()).map(|(a, b)| a + b).collect();
    Tensor4::from_vec(x.shape(), data)
}
