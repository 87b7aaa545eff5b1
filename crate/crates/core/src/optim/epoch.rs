//! One-epoch sign-descent updates of a softmax linear head, comparing
//! sample-wise and full-batch accumulation.

use alloc::vec::Vec;

use crate::block::{sign_vec, BlockedVector};
use crate::error::Error;
use crate::objectives::{Objective, SampledObjective, SoftmaxLinearObjective};

/// How the epoch's per-sample updates combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochMode {
    /// Average of per-sample sign-gradients, all evaluated at the starting
    /// parameters.
    SampleWiseFrozen,
    /// One sign step on the mean gradient.
    FullBatch,
    /// Parameters actually move after each sample, in sample order.
    SampleWiseSequential,
}

/// Net parameter change over one epoch, split by block.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochUpdate {
    /// C×h, row-major by class.
    pub delta_v: Vec<f64>,
    /// Per-class bias change.
    pub delta_b: Vec<f64>,
}

fn split_update(obj: &SoftmaxLinearObjective, delta: &[f64]) -> EpochUpdate {
    let split = obj.classes() * obj.feature_dim();
    EpochUpdate {
        delta_v: delta[..split].to_vec(),
        delta_b: delta[split..].to_vec(),
    }
}

/// Net change of (V, b) after one epoch of sign descent at rate `eta`,
/// starting from `theta`.
pub fn linear_head_epoch_updates(
    obj: &SoftmaxLinearObjective,
    theta: &BlockedVector,
    eta: f64,
    mode: EpochMode,
) -> Result<EpochUpdate, Error> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid("eta must be positive and finite"));
    }
    let n = obj.num_samples();
    let dim = obj.block_spec().total_dim();
    let delta: Vec<f64> = match mode {
        EpochMode::SampleWiseFrozen => {
            let mut acc = alloc::vec![0.0; dim];
            for i in 0..n {
                let g = obj.per_sample_gradient(theta, i)?;
                let s = sign_vec(&g);
                for (a, &si) in acc.iter_mut().zip(s.as_slice()) {
                    *a -= eta / n as f64 * si;
                }
            }
            acc
        }
        EpochMode::FullBatch => {
            let g = obj.gradient(theta)?;
            sign_vec(&g)
                .as_slice()
                .iter()
                .map(|&si| -eta * si)
                .collect()
        }
        EpochMode::SampleWiseSequential => {
            let mut current = theta.clone();
            for i in 0..n {
                let g = obj.per_sample_gradient(&current, i)?;
                current = current.zip_map(&sign_vec(&g), |t, si| t - eta * si)?;
            }
            current
                .as_slice()
                .iter()
                .zip(theta.as_slice())
                .map(|(&after, &before)| after - before)
                .collect()
        }
    };
    Ok(split_update(obj, &delta))
}

/// Closed forms for the frozen sample-wise epoch: every softmax probability
/// lies strictly inside (0, 1), so the sign of each per-sample gradient
/// entry depends only on the label and the feature signs.
///
/// Δb_k = −(η/N)·Σ_i (1 − 2·1[y_i = k]),
/// ΔV_{k,l} = −(η/N)·(Σ_{i: y_i≠k} sign(φ_l(x_i)) − Σ_{i: y_i=k} sign(φ_l(x_i))).
pub fn linear_head_closed_forms(obj: &SoftmaxLinearObjective, eta: f64) -> EpochUpdate {
    let n = obj.num_samples() as f64;
    let c = obj.classes();
    let h = obj.feature_dim();
    let mut delta_b = alloc::vec![0.0; c];
    let mut delta_v = alloc::vec![0.0; c * h];
    for i in 0..obj.num_samples() {
        let y = obj.labels()[i];
        let row = obj.feature_row(i);
        for k in 0..c {
            let orientation = if k == y { -1.0 } else { 1.0 };
            delta_b[k] -= eta / n * orientation;
            for (l, &phi) in row.iter().enumerate() {
                delta_v[k * h + l] -= eta / n * orientation * crate::block::sign_scalar(phi);
            }
        }
    }
    EpochUpdate { delta_v, delta_b }
}
