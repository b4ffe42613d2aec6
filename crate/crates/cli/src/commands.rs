use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use zerostyle_core::fixtures::random_tensor;
use zerostyle_core::graph::{count_flops, count_params, load_model_dir, param_megabytes, save_model_dir};
use zerostyle_core::metrics::{edge_ssim, gram, gram_distance};
use zerostyle_core::pipeline::{default_taps, encode, read_image, stylize as run_stylize, write_image, StyleJob};
use zerostyle_core::prune::{
    apply_prune, detect_zero_channels, propagate_masks, verify_equivalence, PruneReport, Reversion,
};
use zerostyle_core::{benchmark, BenchConfig, Graph, Tensor4, TransferConfig};

use crate::report::{ctx, emit, CliError, EXIT_IO, EXIT_VERIFY};

const REPORT_FILE: &str = "prune_report.json";

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "png"))
        .unwrap_or(false)
}

/// Reads up to `max` images from `dir` in file-name order.
fn load_images(dir: &Path, max: usize) -> Result<Vec<(PathBuf, Tensor4)>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::new(EXIT_IO, "io", format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    paths.sort();
    paths.truncate(max);
    if paths.is_empty() {
        return Err(CliError::new(EXIT_IO, "io", format!("{}: no .ppm or .png images", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| {
            let t = read_image(&p).map_err(ctx(&p))?;
            Ok((p, t))
        })
        .collect()
}

fn load_model(dir: &Path) -> Result<Graph, CliError> {
    load_model_dir(dir).map_err(ctx(dir))
}

fn matching_inputs(g: &Graph, images: Vec<(PathBuf, Tensor4)>) -> Result<Vec<Tensor4>, CliError> {
    let want = g.input.shape();
    images
        .into_iter()
        .map(|(p, t)| {
            if t.shape() != want {
                return Err(CliError::new(
                    crate::report::EXIT_ENGINE,
                    "engine",
                    format!(
                        "{}: image is {}x{}, model `{}` expects {}x{} with {} channels",
                        p.display(),
                        t.shape().h,
                        t.shape().w,
                        g.name,
                        want.h,
                        want.w,
                        want.c
                    ),
                ));
            }
            Ok(t)
        })
        .collect()
}

#[derive(Serialize)]
struct NodeZeros {
    node: String,
    channels: usize,
    zero: usize,
}

#[derive(Serialize)]
struct InspectReport {
    model: String,
    input_shape: [usize; 4],
    calibration_images: usize,
    tau: f32,
    params: u64,
    megabytes: f64,
    flops: u64,
    zero_channels: usize,
    activations: Vec<NodeZeros>,
    prunable_channels: usize,
    params_after_prune: u64,
    flops_after_prune: u64,
    reverted: Vec<Reversion>,
}

pub fn inspect(model: &Path, calib: &Path, tau: f32, max_calib: usize, report: Option<&Path>) -> Result<(), CliError> {
    let g = load_model(model)?;
    let inputs = matching_inputs(&g, load_images(calib, max_calib)?)?;
    let err = ctx(model);
    let det = detect_zero_channels(&g, &inputs, tau).map_err(&err)?;
    let plan = propagate_masks(&g, &det.masks).map_err(&err)?;
    let (_, pr) = apply_prune(&g, &plan).map_err(&err)?;
    let activations = det
        .masks
        .iter()
        .map(|m| NodeZeros {
            node: m.node_id.clone(),
            channels: m.bits.len(),
            zero: det.zero_counts[&m.node_id],
        })
        .collect();
    let shape = g.input.shape();
    let params = count_params(&g);
    let out = InspectReport {
        model: g.name.clone(),
        input_shape: [shape.n, shape.c, shape.h, shape.w],
        calibration_images: inputs.len(),
        tau,
        params,
        megabytes: param_megabytes(params),
        flops: count_flops(&g, shape).map_err(&err)?,
        zero_channels: det.total_zero_channels(),
        activations,
        prunable_channels: pr.channels_removed,
        params_after_prune: pr.params_after,
        flops_after_prune: pr.flops_after,
        reverted: pr.reverted,
    };
    emit(&out, report)
}

pub struct PruneArgs<'a> {
    pub model: &'a Path,
    pub calib: &'a Path,
    pub tau: f32,
    pub max_calib: usize,
    pub output: &'a Path,
    pub verify: bool,
    pub holdout: Option<&'a Path>,
    pub holdout_count: usize,
    pub tolerance: f32,
    pub seed: u64,
}

pub fn prune(a: &PruneArgs) -> Result<(), CliError> {
    let g = load_model(a.model)?;
    let calib = matching_inputs(&g, load_images(a.calib, a.max_calib)?)?;
    let err = ctx(a.model);
    let det = detect_zero_channels(&g, &calib, a.tau).map_err(&err)?;
    let plan = propagate_masks(&g, &det.masks).map_err(&err)?;
    let (pruned, mut report): (Graph, PruneReport) = apply_prune(&g, &plan).map_err(&err)?;
    if a.verify {
        let holdout = match a.holdout {
            Some(dir) => matching_inputs(&g, load_images(dir, usize::MAX)?)?,
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
                (0..a.holdout_count.max(1))
                    .map(|_| random_tensor(g.input.shape(), 0.0, 1.0, &mut rng))
                    .collect()
            }
        };
        let eq = verify_equivalence(&g, &pruned, &holdout, a.tolerance).map_err(&err)?;
        report.attach_verification(eq);
    }
    save_model_dir(&pruned, a.output).map_err(ctx(a.output))?;
    emit(&report, Some(&a.output.join(REPORT_FILE)))?;
    match &report.verification {
        Some(v) if !v.pass => Err(CliError::new(
            EXIT_VERIFY,
            "verify",
            format!(
                "pruned model deviates by {} on held-out inputs, tolerance {}",
                v.max_deviation, v.tolerance
            ),
        )),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct StylizeSummary {
    output: String,
    transform: String,
    height: usize,
    width: usize,
}

pub fn stylize(
    content: &Path,
    style: &Path,
    encoder: &Path,
    decoder: &Path,
    output: &Path,
    cfg: TransferConfig,
) -> Result<(), CliError> {
    let c = read_image(content).map_err(ctx(content))?;
    let s = read_image(style).map_err(ctx(style))?;
    let enc = load_model(encoder)?;
    let dec = load_model(decoder)?;
    let img = run_stylize(&StyleJob::new(&c, &s, &enc, &dec, cfg)).map_err(|e| CliError::engine("stylize", e))?;
    write_image(&img, output).map_err(ctx(output))?;
    emit(
        &StylizeSummary {
            output: output.display().to_string(),
            transform: cfg.mode.to_string(),
            height: c.shape().h,
            width: c.shape().w,
        },
        None,
    )
}

pub fn bench(model: &Path, size: (usize, usize), cfg: &BenchConfig, report: Option<&Path>) -> Result<(), CliError> {
    let g = load_model(model)?;
    let shape = g.input.shape();
    let input = zerostyle_core::Shape4::new(1, shape.c, size.0, size.1);
    let r = benchmark(&g, input, cfg).map_err(ctx(model))?;
    emit(&r, report)
}

#[derive(Serialize)]
struct MetricsReport {
    metric: &'static str,
    edge_ssim: f64,
    gram_distance_rgb: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    features_model: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    feature_gram_distance: BTreeMap<String, f64>,
}

pub fn metrics(a: &Path, b: &Path, features: Option<&Path>, report: Option<&Path>) -> Result<(), CliError> {
    let ta = read_image(a).map_err(ctx(a))?;
    let tb = read_image(b).map_err(ctx(b))?;
    let err = |e| CliError::engine("metrics", e);
    let ssim = edge_ssim(&ta, &tb).map_err(err)?;
    let rgb = gram_distance(&gram(&ta).map_err(err)?, &gram(&tb).map_err(err)?).map_err(err)?;
    let mut per_tap = BTreeMap::new();
    if let Some(m) = features {
        let g = load_model(m)?;
        let taps = default_taps(&g);
        let fa = encode(&g, &ta, &taps).map_err(ctx(m))?;
        let fb = encode(&g, &tb, &taps).map_err(ctx(m))?;
        for ((t, x), y) in taps.iter().zip(&fa).zip(&fb) {
            let d = gram_distance(&gram(x).map_err(err)?, &gram(y).map_err(err)?).map_err(err)?;
            per_tap.insert(t.clone(), d);
        }
    }
    emit(
        &MetricsReport {
            metric: "edge-SSIM (Sobel)",
            edge_ssim: ssim,
            gram_distance_rgb: rgb,
            features_model: features.map(|p| p.display().to_string()),
            feature_gram_distance: per_tap,
        },
        report,
    )
}
