use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{execute, Graph};
use crate::tensor::Tensor4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub inputs: usize,
    pub tolerance: f32,
    /// Largest |original - pruned| over every input and output element.
    /// Serialized as `null` when infinite (a NaN appeared on one side).
    pub max_deviation: f32,
    pub per_output: BTreeMap<String, f32>,
    pub pass: bool,
}

/// Runs both graphs on the same inputs and measures the largest output deviation.
pub fn verify_equivalence(
    original: &Graph,
    pruned: &Graph,
    inputs: &[Tensor4],
    tol: f32,
) -> Result<EquivalenceReport> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("verification needs at least one input".into()));
    }
    if original.outputs != pruned.outputs {
        return Err(Error::Shape(format!(
            "graphs disagree on outputs: {:?} vs {:?}",
            original.outputs, pruned.outputs
        )));
    }
    let mut per_output: BTreeMap<String, f32> =
        original.outputs.iter().map(|o| (o.clone(), 0.0)).collect();
    for x in inputs {
        let a = execute(original, x, &[])?;
        let b = execute(pruned, x, &[])?;
        for (id, dev) in per_output.iter_mut() {
            let (ta, tb) = (&a[id], &b[id]);
            if ta.shape() != tb.shape() {
                return Err(Error::Shape(format!(
                    "pruning changed output `{id}` from {} to {}",
                    ta.shape(),
                    tb.shape()
                )));
            }
            *dev = dev.max(ta.max_abs_diff(tb)?);
        }
    }
    let max_deviation = per_output.values().copied().fold(0.0, f32::max);
    Ok(EquivalenceReport {
        inputs: inputs.len(),
        tolerance: tol,
        max_deviation,
        per_output,
        pass: max_deviation <= tol,
    })
}
