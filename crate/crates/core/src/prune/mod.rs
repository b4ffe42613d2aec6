//! Zero-channel pruning.
//!
//! Channels of relu/relu6 outputs that stay exactly zero over a calibration
//! set are removed together with the conv filters and batch-norm entries that
//! produce them and the kernel slices that read them. No fine-tuning happens;
//! removed channels contributed nothing, so outputs are unchanged.

mod detect;
mod plan;
mod verify;

pub use detect::{detect_zero_channels, Detection};
pub use plan::{apply_plan, propagate_masks, PrunePlan, Reversion, SliceDirective};
pub use verify::{verify_equivalence, EquivalenceReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{count_flops, count_params, param_megabytes, Graph};
use crate::tensor::Tensor4;

/// Default tolerance for pruned-vs-original output deviation.
pub const DEFAULT_VERIFY_TOLERANCE: f32 = 1e-5;

/// Binary keep vector anchored at an activation node: `true` keeps the channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeepMask {
    pub node_id: String,
    pub bits: Vec<bool>,
}

impl KeepMask {
    pub fn new(node_id: &str, bits: Vec<bool>) -> Result<Self> {
        if !bits.iter().any(|&b| b) {
            return Err(Error::InvalidArgument(format!(
                "mask for `{node_id}` keeps no channel"
            )));
        }
        Ok(Self {
            node_id: node_id.to_string(),
            bits,
        })
    }

    /// Parses a string such as `"11001010"`.
    pub fn from_bit_string(node_id: &str, s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::InvalidArgument(format!("invalid mask digit `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(node_id, bits)
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn zero_channels(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (!b).then_some(i))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeChannels {
    pub node: String,
    pub op: String,
    pub channels_before: usize,
    pub channels_after: usize,
}

/// Before/after accounting of a prune, serialized as the JSON prune report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub model: String,
    /// Input shape (n, c, h, w) used for FLOP accounting.
    pub input_shape: [usize; 4],
    pub params_before: u64,
    pub params_after: u64,
    /// Parameter storage as 4-byte floats, 1 MB = 10^6 bytes.
    pub megabytes_before: f64,
    pub megabytes_after: f64,
    pub flops_before: u64,
    pub flops_after: u64,
    pub channels_removed: usize,
    /// Nodes whose output width changed.
    pub nodes: Vec<NodeChannels>,
    pub reverted: Vec<Reversion>,
    /// Present only after [`verify_equivalence`] ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<EquivalenceReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PruneReport {
    pub fn attach_verification(&mut self, eq: EquivalenceReport) {
        if !eq.pass {
            self.warnings.push(format!(
                "held-out deviation {} exceeds tolerance {}",
                eq.max_deviation, eq.tolerance
            ));
        }
        self.verification = Some(eq);
    }

    pub fn max_deviation(&self) -> Option<f32> {
        self.verification.as_ref().map(|v| v.max_deviation)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Rewrites `g` by `plan` and accounts for the change.
pub fn apply_prune(g: &Graph, plan: &PrunePlan) -> Result<(Graph, PruneReport)> {
    let pruned = apply_plan(g, plan)?;
    let shape = g.input.shape();
    let before = g.infer_shapes(shape)?;
    let after = pruned.infer_shapes(shape)?;
    let nodes = g
        .nodes
        .iter()
        .filter(|n| before[&n.id].c != after[&n.id].c)
        .map(|n| NodeChannels {
            node: n.id.clone(),
            op: n.op.kind().to_string(),
            channels_before: before[&n.id].c,
            channels_after: after[&n.id].c,
        })
        .collect();
    let params_before = count_params(g);
    let params_after = count_params(&pruned);
    let report = PruneReport {
        model: g.name.clone(),
        input_shape: [shape.n, shape.c, shape.h, shape.w],
        params_before,
        params_after,
        megabytes_before: param_megabytes(params_before),
        megabytes_after: param_megabytes(params_after),
        flops_before: count_flops(g, shape)?,
        flops_after: count_flops(&pruned, shape)?,
        channels_removed: plan.removed_channels(),
        nodes,
        reverted: plan.reverted.clone(),
        verification: None,
        warnings: Vec::new(),
    };
    Ok((pruned, report))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneConfig {
    /// Channels with max |activation| <= tau count as zero. 0 means exact zeros.
    pub tau: f32,
    pub verify_tolerance: f32,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            verify_tolerance: DEFAULT_VERIFY_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PruneOutcome {
    pub graph: Graph,
    pub detection: Detection,
    pub plan: PrunePlan,
    pub report: PruneReport,
}

/// Detect, propagate, rewrite and (when `holdout` is non-empty) verify.
///
/// Held-out inputs should be disjoint from the calibration set. A positive
/// `tau` requires them, since near-zero channels are not exactly inert.
pub fn prune_graph(
    g: &Graph,
    calibration: &[Tensor4],
    holdout: &[Tensor4],
    cfg: PruneConfig,
) -> Result<PruneOutcome> {
    if cfg.tau > 0.0 && holdout.is_empty() {
        return Err(Error::InvalidArgument(
            "tau > 0 requires held-out inputs for verification".into(),
        ));
    }
    let detection = detect_zero_channels(g, calibration, cfg.tau)?;
    let plan = propagate_masks(g, &detection.masks)?;
    let (graph, mut report) = apply_prune(g, &plan)?;
    if !holdout.is_empty() {
        let eq = verify_equivalence(g, &graph, holdout, cfg.verify_tolerance)?;
        report.attach_verification(eq);
    }
    Ok(PruneOutcome {
        graph,
        detection,
        plan,
        report,
    })
}
