use std::collections::BTreeMap;

use rayon::prelude::*;

use super::KeepMask;
use crate::error::{Error, Result};
use crate::graph::{execute, Graph};
use crate::tensor::Tensor4;

/// Outcome of a calibration scan over every activation node.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    /// One mask per relu/relu6 node, in graph order.
    pub masks: Vec<KeepMask>,
    /// Largest |activation| seen per channel, keyed by node id.
    pub channel_max: BTreeMap<String, Vec<f32>>,
    /// Channels at or below the threshold per node. Can exceed the zero bits of
    /// the mask when every channel of a node is empty (one channel stays kept).
    pub zero_counts: BTreeMap<String, usize>,
}

impl Detection {
    pub fn total_zero_channels(&self) -> usize {
        self.zero_counts.values().sum()
    }
}

/// Flags activation channels whose magnitude never exceeds `tau` on any calibration input.
pub fn detect_zero_channels(g: &Graph, calibration: &[Tensor4], tau: f32) -> Result<Detection> {
    if calibration.is_empty() {
        return Err(Error::InvalidArgument("calibration set is empty".into()));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
    }
    let expected = g.input.shape();
    if let Some(bad) = calibration.iter().find(|t| t.shape() != expected) {
        return Err(Error::Shape(format!(
            "calibration input {} does not match graph input {expected}",
            bad.shape()
        )));
    }
    let anchors: Vec<&str> = g
        .nodes
        .iter()
        .filter(|n| n.op.is_activation())
        .map(|n| n.id.as_str())
        .collect();

    let per_input = calibration
        .par_iter()
        .map(|x| {
            let out = execute(g, x, &anchors)?;
            Ok(anchors
                .iter()
                .map(|id| channel_abs_max(&out[*id]))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut channel_max: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    for (k, id) in anchors.iter().enumerate() {
        let mut acc = per_input[0][k].clone();
        for run in &per_input[1..] {
            for (a, v) in acc.iter_mut().zip(&run[k]) {
                *a = a.max(*v);
            }
        }
        channel_max.insert(id.to_string(), acc);
    }

    let mut masks = Vec::with_capacity(anchors.len());
    let mut zero_counts = BTreeMap::new();
    for id in anchors {
        let maxes = &channel_max[id];
        let mut bits: Vec<bool> = maxes.iter().map(|&m| m > tau).collect();
        zero_counts.insert(id.to_string(), bits.iter().filter(|b| !**b).count());
        if !bits.iter().any(|&b| b) {
            if let Some(first) = bits.first_mut() {
                *first = true;
            }
        }
        masks.push(KeepMask::new(id, bits)?);
    }
    Ok(Detection {
        masks,
        channel_max,
        zero_counts,
    })
}

/// Per-channel max |v|. NaN counts as live.
fn channel_abs_max(t: &Tensor4) -> Vec<f32> {
    (0..t.shape().c)
        .map(|c| {
            t.plane(0, c).iter().fold(0.0f32, |m, v| {
                if v.is_nan() {
                    f32::INFINITY
                } else {
                    m.max(v.abs())
                }
            })
        })
        .collect()
}
