mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use zerostyle_core::TransferMode;

use crate::report::CliError;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, bad value)
  3  I/O error (missing or unreadable file, bad image)
  4  model format error (manifest, weights, validation)
  5  engine error (shape mismatch, invalid argument)
  6  pruning verification failed (deviation above tolerance)
  7  resource limit exceeded";

#[derive(Debug, Parser)]
#[command(name = "zerostyle", version, about = "Zero-channel pruning and feature-transform style transfer", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct CalibArgs {
    /// Directory of PPM/PNG calibration images at the model's input size.
    #[arg(long, value_name = "DIR")]
    calib: PathBuf,
    /// Channels with max |activation| <= T count as zero.
    #[arg(long, value_name = "T", default_value_t = 0.0)]
    tau: f32,
    /// Use at most N calibration images (sorted by file name).
    #[arg(long, value_name = "N", default_value_t = 50)]
    max_calib: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report zero channels, parameters and FLOPs of a model.
    #[command(after_help = EXIT_CODES)]
    Inspect {
        /// Model directory (model.json + weights.bin).
        model: PathBuf,
        #[command(flatten)]
        calib: CalibArgs,
        /// Also write the JSON report to this file.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Remove zero channels and write the pruned model.
    #[command(after_help = EXIT_CODES)]
    Prune {
        model: PathBuf,
        #[command(flatten)]
        calib: CalibArgs,
        /// Output model directory; prune_report.json is written next to the model files.
        #[arg(short, long, value_name = "DIR")]
        output: PathBuf,
        /// Compare pruned and original outputs on held-out inputs. Implied by --tau > 0.
        #[arg(long)]
        verify: bool,
        /// Held-out images for --verify. Defaults to seeded random inputs.
        #[arg(long, value_name = "DIR")]
        holdout: Option<PathBuf>,
        /// Number of random held-out inputs when --holdout is not given.
        #[arg(long, value_name = "N", default_value_t = 20)]
        holdout_count: usize,
        #[arg(long, value_name = "TOL", default_value_t = zerostyle_core::prune::DEFAULT_VERIFY_TOLERANCE)]
        tolerance: f32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stylize a content image with the texture of a style image.
    #[command(after_help = EXIT_CODES)]
    Stylize {
        #[arg(long, value_name = "IMG")]
        content: PathBuf,
        #[arg(long, value_name = "IMG")]
        style: PathBuf,
        #[arg(long, value_name = "DIR")]
        encoder: PathBuf,
        #[arg(long, value_name = "DIR")]
        decoder: PathBuf,
        /// Output image (.ppm or .png).
        #[arg(short, long, value_name = "IMG")]
        output: PathBuf,
        #[arg(long, value_name = "MODE", default_value = "s2", value_parser = parse_mode)]
        transform: TransferMode,
        #[arg(long, value_name = "K", default_value_t = 3)]
        patch_size: usize,
        #[arg(long, value_name = "S", default_value_t = 1)]
        patch_stride: usize,
        /// Blend weight of the stylized feature against the content feature.
        #[arg(long, value_name = "A", default_value_t = 1.0)]
        alpha: f32,
    },
    /// Time model execution on random inputs (engine only).
    #[command(after_help = EXIT_CODES)]
    Bench {
        model: PathBuf,
        /// Input size as HxW.
        #[arg(long, value_name = "HxW", value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, value_name = "N", default_value_t = 10)]
        iters: usize,
        #[arg(long, value_name = "W", default_value_t = 1)]
        warmup: usize,
        /// Parallelize convolutions (reported separately from single-threaded runs).
        #[arg(long)]
        parallel: bool,
        /// Reuse one input for every run.
        #[arg(long)]
        fixed_input: bool,
        /// Refuse inputs whose estimated memory exceeds this many megabytes.
        #[arg(long, value_name = "MB", default_value_t = 4096)]
        memory_budget_mb: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Compare two images: edge-SSIM (Sobel) and Gram distances.
    #[command(after_help = EXIT_CODES)]
    Metrics {
        #[arg(long, value_name = "IMG")]
        a: PathBuf,
        #[arg(long, value_name = "IMG")]
        b: PathBuf,
        /// Encoder model whose taps are used for feature Gram distances.
        #[arg(long, value_name = "MODEL")]
        features: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<TransferMode, String> {
    s.parse().map_err(|e: zerostyle_core::Error| e.to_string())
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0);
    match (parse(h), parse(w)) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => Err(format!("expected positive HxW, got `{s}`")),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Inspect { model, calib, report } => {
            commands::inspect(&model, &calib.calib, calib.tau, calib.max_calib, report.as_deref())
        }
        Command::Prune {
            model,
            calib,
            output,
            verify,
            holdout,
            holdout_count,
            tolerance,
            seed,
        } => commands::prune(&commands::PruneArgs {
            model: &model,
            calib: &calib.calib,
            tau: calib.tau,
            max_calib: calib.max_calib,
            output: &output,
            verify: verify || calib.tau > 0.0,
            holdout: holdout.as_deref(),
            holdout_count,
            tolerance,
            seed,
        }),
        Command::Stylize {
            content,
            style,
            encoder,
            decoder,
            output,
            transform,
            patch_size,
            patch_stride,
            alpha,
        } => {
            let cfg = zerostyle_core::TransferConfig {
                patch_size,
                patch_stride,
                mode: transform,
                blend_alpha: alpha,
                ..Default::default()
            };
            commands::stylize(&content, &style, &encoder, &decoder, &output, cfg)
        }
        Command::Bench {
            model,
            size,
            iters,
            warmup,
            parallel,
            fixed_input,
            memory_budget_mb,
            seed,
            report,
        } => {
            let cfg = zerostyle_core::BenchConfig {
                iters,
                warmup,
                fixed_input,
                parallel,
                seed,
                memory_budget: Some(memory_budget_mb.saturating_mul(1_000_000)),
            };
            commands::bench(&model, size, &cfg, report.as_deref())
        }
        Command::Metrics { a, b, features, report } => {
            commands::metrics(&a, &b, features.as_deref(), report.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code)
        }
    }
}
