//! Feature transforms: AdaIN, patch swapping and their sandwich composition.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::concat_channels;
use crate::tensor::{ChannelStats, Shape4, Tensor4, DEFAULT_EPS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    Adain,
    Swap,
    #[default]
    S2,
    AdainSwap,
    SwapAdain,
}

impl TransferMode {
    pub const ALL: [TransferMode; 5] = [
        TransferMode::Adain,
        TransferMode::Swap,
        TransferMode::S2,
        TransferMode::AdainSwap,
        TransferMode::SwapAdain,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TransferMode::Adain => "adain",
            TransferMode::Swap => "swap",
            TransferMode::S2 => "s2",
            TransferMode::AdainSwap => "adain_swap",
            TransferMode::SwapAdain => "swap_adain",
        }
    }
}

impl fmt::Display for TransferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransferMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown transform `{s}` (expected s2, adain, swap, adain_swap or swap_adain)"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub patch_size: usize,
    pub patch_stride: usize,
    /// Variance guard for AdaIN and floor for style patch norms.
    pub eps: f32,
    pub mode: TransferMode,
    /// Weight of the transformed feature when blending with the content feature.
    pub blend_alpha: f32,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            patch_size: 3,
            patch_stride: 1,
            eps: DEFAULT_EPS,
            mode: TransferMode::S2,
            blend_alpha: 1.0,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::InvalidArgument("patch_size must be >= 1".into()));
        }
        if self.patch_stride == 0 || self.patch_stride > self.patch_size {
            return Err(Error::InvalidArgument(format!(
                "patch_stride must be in 1..={}, got {}",
                self.patch_size, self.patch_stride
            )));
        }
        if !(0.0..=1.0).contains(&self.blend_alpha) {
            return Err(Error::InvalidArgument(format!(
                "blend_alpha must be in [0, 1], got {}",
                self.blend_alpha
            )));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be >= 0, got {}", self.eps)));
        }
        Ok(())
    }
}

fn check_channels(a: Shape4, b: Shape4, what: &str) -> Result<()> {
    if a.c != b.c {
        return Err(Error::Shape(format!(
            "{what}: channel counts differ ({} vs {})",
            a.c, b.c
        )));
    }
    Ok(())
}

/// Removes per-channel mean and std. Returns the normalized tensor and the removed stats.
pub fn normalize(f: &Tensor4, eps: f32) -> Result<(Tensor4, ChannelStats)> {
    f.require_single("normalize")?;
    let s = f.shape();
    if s.plane() == 0 {
        return Err(Error::Shape(format!("normalize needs a non-empty feature, got {s}")));
    }
    let count = s.plane() as f64;
    let mut out = f.clone();
    let mut stats = ChannelStats {
        mean: Vec::with_capacity(s.c),
        std: Vec::with_capacity(s.c),
    };
    for c in 0..s.c {
        let plane = f.plane(0, c);
        let m = plane.iter().map(|&v| v as f64).sum::<f64>() / count;
        let var = plane.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / count;
        let sd = (var + eps as f64).sqrt();
        for v in out.plane_mut(0, c) {
            *v = if sd > 0.0 {
                ((*v as f64 - m) / sd) as f32
            } else {
                0.0
            };
        }
        stats.mean.push(m as f32);
        stats.std.push(sd as f32);
    }
    Ok((out, stats))
}

/// Scales and shifts every channel to the target stats.
pub fn colorize(f_norm: &Tensor4, target: &ChannelStats) -> Result<Tensor4> {
    f_norm.require_single("colorize")?;
    let s = f_norm.shape();
    if target.mean.len() != s.c || target.std.len() != s.c {
        return Err(Error::Shape(format!(
            "colorize: feature has {} channels, stats have {}",
            s.c,
            target.mean.len()
        )));
    }
    let mut out = f_norm.clone();
    for c in 0..s.c {
        let (m, sd) = (target.mean[c], target.std[c]);
        for v in out.plane_mut(0, c) {
            *v = *v * sd + m;
        }
    }
    Ok(out)
}

pub fn adain(f_c: &Tensor4, f_s: &Tensor4, eps: f32) -> Result<Tensor4> {
    check_channels(f_c.shape(), f_s.shape(), "adain")?;
    let (norm, _) = normalize(f_c, eps)?;
    let (_, style) = normalize(f_s, eps)?;
    colorize(&norm, &style)
}

/// Patch origins along one axis: the stride grid, plus the last origin when
/// the grid leaves the far border uncovered.
pub fn patch_origins(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    if len < patch || stride == 0 {
        return Vec::new();
    }
    let last = len - patch;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().expect("non-empty") != last {
        v.push(last);
    }
    v
}

/// Result of patch matching, row-major over content and style patch locations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwapMatches {
    pub content_locations: Vec<(usize, usize)>,
    pub style_locations: Vec<(usize, usize)>,
    /// Index into `style_locations` chosen for each content location.
    pub selected: Vec<usize>,
}

fn extract_patch(f: &Tensor4, y: usize, x: usize, k: usize, out: &mut Vec<f32>) {
    let s = f.shape();
    for c in 0..s.c {
        let plane = f.plane(0, c);
        for dy in 0..k {
            let row = (y + dy) * s.w + x;
            out.extend_from_slice(&plane[row..row + k]);
        }
    }
}

fn grid(h: usize, w: usize, k: usize, stride: usize) -> (Vec<(usize, usize)>, Vec<bool>) {
    let ys = patch_origins(h, k, stride);
    let xs = patch_origins(w, k, stride);
    let mut locs = Vec::with_capacity(ys.len() * xs.len());
    let mut on_grid = Vec::with_capacity(locs.capacity());
    for &y in &ys {
        for &x in &xs {
            locs.push((y, x));
            on_grid.push(y % stride == 0 && x % stride == 0);
        }
    }
    (locs, on_grid)
}

/// Replaces every content patch with the style patch of highest normalized
/// cross-correlation `<p_c, p_s / max(|p_s|, eps)>` and averages overlaps.
///
/// Ties go to the lowest style index. Output pixels covered by a stride-grid
/// patch average only grid patches; the border strip left by a stride that
/// does not divide the size is filled from the end-aligned patches.
pub fn style_swap(f_c: &Tensor4, f_s: &Tensor4, patch: usize, stride: usize, eps: f32) -> Result<Tensor4> {
    style_swap_with_matches(f_c, f_s, patch, stride, eps).map(|(t, _)| t)
}

pub fn style_swap_with_matches(
    f_c: &Tensor4,
    f_s: &Tensor4,
    patch: usize,
    stride: usize,
    eps: f32,
) -> Result<(Tensor4, SwapMatches)> {
    f_c.require_single("style_swap")?;
    f_s.require_single("style_swap")?;
    let (cs, ss) = (f_c.shape(), f_s.shape());
    check_channels(cs, ss, "style_swap")?;
    if patch == 0 || stride == 0 || stride > patch {
        return Err(Error::InvalidArgument(format!(
            "style_swap needs patch >= 1 and 1 <= stride <= patch, got patch {patch} stride {stride}"
        )));
    }
    for (name, s) in [("content", cs), ("style", ss)] {
        if s.h < patch || s.w < patch {
            return Err(Error::Shape(format!(
                "patch size {patch} exceeds {name} feature {}x{}",
                s.h, s.w
            )));
        }
    }

    let dim = cs.c * patch * patch;
    let (style_locs, _) = grid(ss.h, ss.w, patch, stride);
    let mut style_raw = Vec::with_capacity(style_locs.len() * dim);
    for &(y, x) in &style_locs {
        extract_patch(f_s, y, x, patch, &mut style_raw);
    }
    let inv_norm: Vec<f64> = style_raw
        .chunks_exact(dim)
        .map(|p| {
            let n = p.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            1.0 / n.max(eps as f64)
        })
        .collect();

    let (content_locs, on_grid) = grid(cs.h, cs.w, patch, stride);
    let selected: Vec<usize> = content_locs
        .par_iter()
        .map(|&(y, x)| {
            let mut pc = Vec::with_capacity(dim);
            extract_patch(f_c, y, x, patch, &mut pc);
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (j, ps) in style_raw.chunks_exact(dim).enumerate() {
                let dot: f64 = pc.iter().zip(ps).map(|(&a, &b)| a as f64 * b as f64).sum();
                let score = dot * inv_norm[j];
                if score > best_score {
                    best_score = score;
                    best = j;
                }
            }
            best
        })
        .collect();

    // Grid patches first; border pixels they miss are filled by the rest.
    let mut acc = vec![0.0f64; cs.numel()];
    let mut count = vec![0u32; cs.plane()];
    let k = patch;
    let place = |loc: usize, only_uncovered: bool, acc: &mut Vec<f64>, count: &mut Vec<u32>, covered: &[bool]| {
        let (y, x) = content_locs[loc];
        let ps = &style_raw[selected[loc] * dim..(selected[loc] + 1) * dim];
        for dy in 0..k {
            for dx in 0..k {
                let pix = (y + dy) * cs.w + x + dx;
                if only_uncovered && covered[pix] {
                    continue;
                }
                count[pix] += 1;
                for c in 0..cs.c {
                    acc[c * cs.plane() + pix] += ps[(c * k + dy) * k + dx] as f64;
                }
            }
        }
    };
    let none = vec![false; cs.plane()];
    for loc in (0..content_locs.len()).filter(|&l| on_grid[l]) {
        place(loc, false, &mut acc, &mut count, &none);
    }
    let covered: Vec<bool> = count.iter().map(|&n| n > 0).collect();
    for loc in (0..content_locs.len()).filter(|&l| !on_grid[l]) {
        place(loc, true, &mut acc, &mut count, &covered);
    }

    let mut out = Tensor4::zeros(cs);
    for c in 0..cs.c {
        let plane = out.plane_mut(0, c);
        for (pix, v) in plane.iter_mut().enumerate() {
            let n = count[pix];
            debug_assert!(n > 0, "every pixel is covered");
            *v = (acc[c * cs.plane() + pix] / n as f64) as f32;
        }
    }
    Ok((
        out,
        SwapMatches {
            content_locations: content_locs,
            style_locations: style_locs,
            selected,
        },
    ))
}

/// Applies the transform selected by `cfg.mode`; `S2` is AdaIN, swap, AdaIN.
/// With `blend_alpha < 1` the result is mixed with `f_c`.
pub fn sandwich_swap(f_c: &Tensor4, f_s: &Tensor4, cfg: &TransferConfig) -> Result<Tensor4> {
    cfg.validate()?;
    check_channels(f_c.shape(), f_s.shape(), "sandwich_swap")?;
    let swap = |f: &Tensor4| style_swap(f, f_s, cfg.patch_size, cfg.patch_stride, cfg.eps);
    let ada = |f: &Tensor4| adain(f, f_s, cfg.eps);
    let out = match cfg.mode {
        TransferMode::Adain => ada(f_c)?,
        TransferMode::Swap => swap(f_c)?,
        TransferMode::S2 => ada(&swap(&ada(f_c)?)?)?,
        TransferMode::AdainSwap => swap(&ada(f_c)?)?,
        TransferMode::SwapAdain => ada(&swap(f_c)?)?,
    };
    if cfg.blend_alpha >= 1.0 {
        return Ok(out);
    }
    let a = cfg.blend_alpha;
    let blended: Vec<f32> = out
        .data()
        .iter()
        .zip(f_c.data())
        .map(|(&o, &c)| a * o + (1.0 - a) * c)
        .collect();
    Tensor4::from_vec(out.shape(), blended)
}

/// Where each block's channels sit inside an aggregated feature.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub block: usize,
    pub channels: Range<usize>,
    /// Spatial size (h, w) before pooling.
    pub original: (usize, usize),
}

pub type AggregateLayout = Vec<LayoutEntry>;

/// Averages non-overlapping `fh x fw` blocks.
fn block_average(f: &Tensor4, fh: usize, fw: usize) -> Tensor4 {
    let s = f.shape();
    let out_shape = Shape4::new(s.n, s.c, s.h / fh, s.w / fw);
    if fh == 1 && fw == 1 {
        return f.clone();
    }
    let area = (fh * fw) as f32;
    Tensor4::from_fn(out_shape, |n, c, y, x| {
        let mut sum = 0.0f32;
        for dy in 0..fh {
            for dx in 0..fw {
                sum += f.at(n, c, y * fh + dy, x * fw + dx);
            }
        }
        sum / area
    })
}

/// Pools every tap to `target` (h, w) by block averaging and concatenates them in order.
pub fn aggregate_features(taps: &[Tensor4], target: (usize, usize)) -> Result<(Tensor4, AggregateLayout)> {
    if taps.is_empty() {
        return Err(Error::InvalidArgument("aggregate_features needs at least one tap".into()));
    }
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::Shape(format!("target size {th}x{tw} is empty")));
    }
    let mut pooled = Vec::with_capacity(taps.len());
    let mut layout = Vec::with_capacity(taps.len());
    let mut offset = 0;
    for (block, t) in taps.iter().enumerate() {
        t.require_single("aggregate_features")?;
        let s = t.shape();
        if s.h % th != 0 || s.w % tw != 0 || s.h < th || s.w < tw {
            return Err(Error::Shape(format!(
                "tap {block} is {}x{}, not an integer multiple of the target {th}x{tw}",
                s.h, s.w
            )));
        }
        pooled.push(block_average(t, s.h / th, s.w / tw));
        layout.push(LayoutEntry {
            block,
            channels: offset..offset + s.c,
            original: (s.h, s.w),
        });
        offset += s.c;
    }
    let refs: Vec<&Tensor4> = pooled.iter().collect();
    Ok((concat_channels(&refs)?, layout))
}

/// Slices an aggregated feature back into per-block channel ranges (pooled resolution).
pub fn split_aggregate(f: &Tensor4, layout: &AggregateLayout) -> Result<Vec<Tensor4>> {
    let c = f.shape().c;
    layout
        .iter()
        .map(|e| {
            if e.channels.end > c {
                return Err(Error::Shape(format!(
                    "layout range {:?} exceeds {c} channels",
                    e.channels
                )));
            }
            f.select_channels(&e.channels.clone().collect::<Vec<_>>())
        })
        .collect()
}
