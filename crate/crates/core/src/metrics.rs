//! Gram statistics and edge-SSIM (Sobel).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// `F F^T / (C H W)` for the C x (H W) unfolding of a single-item feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub channels: usize,
    /// Row-major C x C values.
    pub values: Vec<f64>,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.channels + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.channels).map(|i| self.get(i, i)).collect()
    }
}

pub fn gram(f: &Tensor4) -> Result<GramMatrix> {
    f.require_single("gram")?;
    let s = f.shape();
    let c = s.c;
    let denom = (c * s.plane()) as f64;
    let mut values = vec![0.0; c * c];
    for i in 0..c {
        let a = f.plane(0, i);
        for j in i..c {
            let b = f.plane(0, j);
            let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
            let v = if denom > 0.0 { dot / denom } else { 0.0 };
            values[i * c + j] = v;
            values[j * c + i] = v;
        }
    }
    Ok(GramMatrix { channels: c, values })
}

/// Frobenius norm of the difference of two Gram matrices.
pub fn gram_distance(a: &GramMatrix, b: &GramMatrix) -> Result<f64> {
    if a.channels != b.channels {
        return Err(Error::Shape(format!(
            "gram_distance: {} vs {} channels",
            a.channels, b.channels
        )));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Single-channel f64 image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Plane {
    fn at_clamped(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.data[y * self.w + x]
    }
}

/// Rec. 601 luma of an RGB tensor.
pub fn grayscale(img: &Tensor4) -> Result<Plane> {
    let s = img.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::Shape(format!("expected an RGB image (1, 3, h, w), got {s}")));
    }
    let (r, g, b) = (img.plane(0, 0), img.plane(0, 1), img.plane(0, 2));
    let data = (0..s.plane())
        .map(|i| 0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64)
        .collect();
    Ok(Plane { h: s.h, w: s.w, data })
}

/// Sobel gradient magnitude with replicated borders.
pub fn sobel_magnitude(p: &Plane) -> Plane {
    let mut data = Vec::with_capacity(p.data.len());
    for y in 0..p.h as isize {
        for x in 0..p.w as isize {
            let v = |dy: isize, dx: isize| p.at_clamped(y + dy, x + dx);
            let gx = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1)) - (v(-1, -1) + 2.0 * v(0, -1) + v(1, -1));
            let gy = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1)) - (v(-1, -1) + 2.0 * v(-1, 0) + v(-1, 1));
            data.push((gx * gx + gy * gy).sqrt());
        }
    }
    Plane { h: p.h, w: p.w, data }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian(n: usize, sigma: f64) -> Vec<f64> {
    let center = (n as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..n)
        .map(|i| (-((i as f64 - center).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = g.iter().sum();
    g.into_iter().map(|v| v / sum).collect()
}

/// Separable weighted sum over every fully contained `k x k` window.
fn filter_valid(data: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * data[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over valid Gaussian windows, with dynamic range `range`.
///
/// The window shrinks to the smaller image side when that is below 11.
pub fn ssim(a: &Plane, b: &Plane, range: f64) -> Result<f64> {
    if (a.h, a.w) != (b.h, b.w) {
        return Err(Error::Shape(format!(
            "ssim: {}x{} vs {}x{}",
            a.h, a.w, b.h, b.w
        )));
    }
    if a.h == 0 || a.w == 0 {
        return Err(Error::Shape("ssim on an empty image".into()));
    }
    let k = SSIM_WINDOW.min(a.h).min(a.w);
    let g = gaussian(k, SSIM_SIGMA);
    let (h, w) = (a.h, a.w);
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&a.data, h, w, &g);
    let mu_b = filter_valid(&b.data, h, w, &g);
    let e_aa = filter_valid(&prod(&a.data, &a.data), h, w, &g);
    let e_bb = filter_valid(&prod(&b.data, &b.data), h, w, &g);
    let e_ab = filter_valid(&prod(&a.data, &b.data), h, w, &g);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    Ok(total / n as f64)
}

/// SSIM between Sobel edge maps of two RGB images. Range is the larger edge
/// map maximum, or 1 when both images are flat.
pub fn edge_ssim(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "edge_ssim needs equal sizes, got {} and {}",
            a.shape(),
            b.shape()
        )));
    }
    let ea = sobel_magnitude(&grayscale(a)?);
    let eb = sobel_magnitude(&grayscale(b)?);
    let peak = ea.data.iter().chain(&eb.data).cloned().fold(0.0, f64::max);
    let range = if peak > 0.0 { peak } else { 1.0 };
    ssim(&ea, &eb, range)
}
