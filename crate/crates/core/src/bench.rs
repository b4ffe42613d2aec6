//! Wall-clock timing of graph execution.

use std::collections::HashMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::random_tensor;
use crate::graph::{execute_with, ExecOptions, Graph};
use crate::tensor::Shape4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchConfig {
    pub iters: usize,
    pub warmup: usize,
    /// Reuse one input for every run instead of drawing a fresh one.
    pub fixed_input: bool,
    pub parallel: bool,
    pub seed: u64,
    /// Refuse to run when the estimated peak memory exceeds this many bytes.
    pub memory_budget: Option<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            iters: 10,
            warmup: 1,
            fixed_input: false,
            parallel: false,
            seed: 0,
            memory_budget: None,
        }
    }
}

/// Seconds per `execute` call. Excludes input generation and model loading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub model: String,
    pub input_shape: [usize; 4],
    pub runs: usize,
    pub warmup: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub min_s: f64,
    pub fixed_input: bool,
    pub parallel: bool,
    pub scope: String,
}

/// Peak bytes of parameters plus simultaneously live activations during `execute`.
pub fn estimate_peak_bytes(g: &Graph, input: Shape4) -> Result<u64> {
    let shapes = g.infer_shapes(input)?;
    let mut last_use: HashMap<&str, usize> = HashMap::new();
    for (i, node) in g.nodes.iter().enumerate() {
        for inp in &node.inputs {
            last_use.insert(inp, i);
        }
    }
    let bytes = |id: &str| shapes[id].numel() as u64 * 4;
    let params = crate::graph::count_params(g) * 4;
    let mut live: u64 = bytes(&g.input.name) * 2;
    let mut peak = live;
    for (i, node) in g.nodes.iter().enumerate() {
        live += bytes(&node.id);
        peak = peak.max(live);
        for inp in &node.inputs {
            if last_use.get(inp.as_str()) == Some(&i) {
                live -= bytes(inp);
            }
        }
        if !last_use.contains_key(node.id.as_str()) && !g.outputs.contains(&node.id) {
            live -= bytes(&node.id);
        }
    }
    Ok(params + peak)
}

pub fn benchmark(g: &Graph, input: Shape4, cfg: &BenchConfig) -> Result<BenchResult> {
    if cfg.iters == 0 {
        return Err(Error::InvalidArgument("iters must be >= 1".into()));
    }
    g.infer_shapes(input)?;
    if let Some(budget) = cfg.memory_budget {
        let needed = estimate_peak_bytes(g, input)?;
        if needed > budget {
            return Err(Error::ResourceLimit { needed, budget });
        }
    }
    let opts = ExecOptions { parallel: cfg.parallel };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fixed = random_tensor(input, 0.0, 1.0, &mut rng);
    for _ in 0..cfg.warmup {
        execute_with(g, &fixed, &[], opts)?;
    }
    let mut times = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let fresh;
        let x = if cfg.fixed_input {
            &fixed
        } else {
            fresh = random_tensor(input, 0.0, 1.0, &mut rng);
            &fresh
        };
        let start = Instant::now();
        let out = execute_with(g, x, &[], opts)?;
        let dt = start.elapsed().as_secs_f64();
        drop(out);
        times.push(dt.max(f64::MIN_POSITIVE));
    }
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(BenchResult {
        model: g.name.clone(),
        input_shape: [input.n, input.c, input.h, input.w],
        runs: n,
        warmup: cfg.warmup,
        mean_s: times.iter().sum::<f64>() / n as f64,
        median_s: median,
        min_s: sorted[0],
        fixed_input: cfg.fixed_input,
        parallel: cfg.parallel,
        scope: "engine-only".into(),
    })
}
