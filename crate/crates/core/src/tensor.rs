//! Dense NCHW tensors and per-channel statistics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default epsilon added to the variance before taking the square root.
pub const DEFAULT_EPS: f32 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn with_channels(self, c: usize) -> Self {
        Self { c, ..self }
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Rank-4 tensor of 32-bit floats stored contiguously in n, c, h, w order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    shape: Shape4,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(shape: Shape4) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape4, value: f32) -> Self {
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape4, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.numel()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor by evaluating `f(n, c, h, w)` for every element.
    pub fn from_fn(shape: Shape4, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.index(n, c, h, w)]
    }

    /// The `h * w` plane of channel `c` in batch item `n`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub(crate) fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Keeps the listed channels (in the given order) of every batch item.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        if let Some(&bad) = channels.iter().find(|&&c| c >= self.shape.c) {
            return Err(Error::Shape(format!(
                "channel {bad} out of range for {} channels",
                self.shape.c
            )));
        }
        let shape = self.shape.with_channels(channels.len());
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..self.shape.n {
            for &c in channels {
                data.extend_from_slice(self.plane(n, c));
            }
        }
        Ok(Self { shape, data })
    }

    /// Keeps the listed batch items (for OIHW weights: output filters) in the given order.
    pub fn select_outer(&self, items: &[usize]) -> Result<Self> {
        if let Some(&bad) = items.iter().find(|&&n| n >= self.shape.n) {
            return Err(Error::Shape(format!(
                "index {bad} out of range for {} items",
                self.shape.n
            )));
        }
        let inner = self.shape.c * self.shape.plane();
        let shape = Shape4::new(items.len(), self.shape.c, self.shape.h, self.shape.w);
        let mut data = Vec::with_capacity(shape.numel());
        for &n in items {
            data.extend_from_slice(&self.data[n * inner..(n + 1) * inner]);
        }
        Ok(Self { shape, data })
    }

    /// Largest absolute elementwise difference. NaN differences count as infinite.
    pub fn max_abs_diff(&self, other: &Tensor4) -> Result<f32> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot compare {} with {}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = (a - b).abs();
                if d.is_nan() {
                    f32::INFINITY
                } else {
                    d
                }
            })
            .fold(0.0, f32::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn require_single(&self, what: &str) -> Result<()> {
        if self.shape.n != 1 {
            return Err(Error::Shape(format!(
                "{what} expects batch size 1, got {}",
                self.shape.n
            )));
        }
        Ok(())
    }
}

/// Per-channel mean and standard deviation over the spatial axes.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl ChannelStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Population mean and `sqrt(var + eps)` of every channel of a single-item tensor.
///
/// Accumulates in f64 with a two-pass variance.
pub fn channel_stats(f: &Tensor4, eps: f32) -> Result<ChannelStats> {
    f.require_single("channel_stats")?;
    let s = f.shape();
    if s.plane() == 0 {
        return Err(Error::Shape(format!(
            "channel_stats needs a non-empty spatial extent, got {s}"
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    let count = s.plane() as f64;
    let mut mean = Vec::with_capacity(s.c);
    let mut std = Vec::with_capacity(s.c);
    for c in 0..s.c {
        let plane = f.plane(0, c);
        let m = plane.iter().map(|&v| v as f64).sum::<f64>() / count;
        let var = plane
            .iter()
            .map(|&v| {
                let d = v as f64 - m;
                d * d
            })
            .sum::<f64>()
            / count;
        mean.push(m as f32);
        std.push((var + eps as f64).sqrt() as f32);
    }
    Ok(ChannelStats { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor4::from_vec(Shape4::new(1, 2, 2, 2), vec![0.0; 7]).is_err());
        assert!(Tensor4::from_vec(Shape4::new(1, 2, 2, 2), vec![0.0; 8]).is_ok());
    }

    #[test]
    fn stats_constant_channel() {
        let t = Tensor4::full(Shape4::new(1, 1, 3, 3), 5.0);
        let st = channel_stats(&t, 1e-5).unwrap();
        assert_eq!(st.mean[0], 5.0);
        assert!((st.std[0] - 1e-5f32.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn stats_alternating_signs() {
        let t = Tensor4::from_vec(Shape4::new(1, 1, 2, 2), vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let st = channel_stats(&t, 0.0).unwrap();
        assert_eq!(st.mean[0], 0.0);
        assert_eq!(st.std[0], 1.0);
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = Tensor4::from_fn(Shape4::new(1, 3, 4, 4), |_, _, _, _| rng.gen_range(-3.0..3.0));
        let st = channel_stats(&t, 1e-5).unwrap();
        for c in 0..3 {
            let mut sum = 0.0f64;
            for h in 0..4 {
                for w in 0..4 {
                    sum += t.at(0, c, h, w) as f64;
                }
            }
            let mean = sum / 16.0;
            let mut sq = 0.0f64;
            for h in 0..4 {
                for w in 0..4 {
                    sq += (t.at(0, c, h, w) as f64 - mean).powi(2);
                }
            }
            let std = (sq / 16.0 + 1e-5).sqrt();
            assert!((st.mean[c] as f64 - mean).abs() < 1e-6);
            assert!((st.std[c] as f64 - std).abs() < 1e-6);
        }
    }

    #[test]
    fn stats_reject_batch_and_empty() {
        assert!(channel_stats(&Tensor4::zeros(Shape4::new(2, 1, 2, 2)), 1e-5).is_err());
        assert!(channel_stats(&Tensor4::zeros(Shape4::new(1, 1, 0, 2)), 1e-5).is_err());
    }

    #[test]
    fn select_channels_keeps_order() {
        let t = Tensor4::from_fn(Shape4::new(1, 4, 1, 2), |_, c, _, w| (c * 10 + w) as f32);
        let s = t.select_channels(&[0, 2, 3]).unwrap();
        assert_eq!(s.data(), &[0.0, 1.0, 20.0, 21.0, 30.0, 31.0]);
        assert!(t.select_channels(&[4]).is_err());
    }
}
