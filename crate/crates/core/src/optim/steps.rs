//! Single-step update rules and the mutable optimizer state they share.

use crate::block::{sign_vec, vector_norm, BlockSpec, BlockedVector, Norm};
use crate::error::Error;
use crate::numeric;

/// How the first moment accumulates gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumForm {
    /// m = β·m + (1−β)·g. Matches the moment estimates used by Adam.
    Ema,
    /// m = β·m + g.
    HeavyBall,
}

/// Optimizer hyperparameters. Defaults: β₁=0.9, β₂=0.999, ε=1e-8 with ε
/// inside the square root, momentum β=0.9 in EMA form, RMSProp α=0.99,
/// no clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// true → denominator √(v̂+ε); false → √(v̂)+ε.
    pub eps_inside_sqrt: bool,
    pub momentum_beta: f64,
    pub momentum_form: MomentumForm,
    /// Second-moment decay for RMSProp.
    pub alpha: f64,
    pub clip_threshold: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            eps_inside_sqrt: true,
            momentum_beta: 0.9,
            momentum_form: MomentumForm::Ema,
            alpha: 0.99,
            clip_threshold: None,
        }
    }
}

/// Mutable per-trajectory optimizer state: step counter and the first and
/// second gradient moments.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub t: u64,
    pub m: BlockedVector,
    pub v: BlockedVector,
    pub hyper: Hyperparams,
}

impl OptimizerState {
    /// Fresh state with zero moments at t = 0.
    pub fn new(spec: BlockSpec, hyper: Hyperparams) -> Self {
        Self {
            t: 0,
            m: BlockedVector::zeros(spec.clone()),
            v: BlockedVector::zeros(spec),
            hyper,
        }
    }
}

fn check_eta(eta: f64) -> Result<(), Error> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid("step size must be positive and finite"));
    }
    Ok(())
}

/// θ − η·g.
pub fn gd_step(theta: &BlockedVector, g: &BlockedVector, eta: f64) -> Result<BlockedVector, Error> {
    check_eta(eta)?;
    theta.zip_map(g, |t, gi| t - eta * gi)
}

/// θ − η·sign(g), with sign(0) = 0 so zero coordinates do not move.
pub fn sign_step(
    theta: &BlockedVector,
    g: &BlockedVector,
    eta: f64,
) -> Result<BlockedVector, Error> {
    check_eta(eta)?;
    theta.zip_map(g, |t, gi| t - eta * crate::block::sign_scalar(gi))
}

/// Updates the first moment in place and returns it.
pub fn momentum_update(
    state: &mut OptimizerState,
    g: &BlockedVector,
    beta: f64,
) -> Result<BlockedVector, Error> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid("momentum beta must lie in [0, 1)"));
    }
    let m = match state.hyper.momentum_form {
        MomentumForm::Ema => state.m.zip_map(g, |m, gi| beta * m + (1.0 - beta) * gi)?,
        MomentumForm::HeavyBall => state.m.zip_map(g, |m, gi| beta * m + gi)?,
    };
    state.m = m.clone();
    Ok(m)
}

/// One Adam step with bias-corrected moments; increments the step counter.
pub fn adam_step(
    state: &mut OptimizerState,
    theta: &BlockedVector,
    g: &BlockedVector,
    eta: f64,
) -> Result<BlockedVector, Error> {
    check_eta(eta)?;
    let h = state.hyper;
    if !(0.0..1.0).contains(&h.beta1) || !(0.0..1.0).contains(&h.beta2) {
        return Err(Error::invalid("Adam betas must lie in [0, 1)"));
    }
    if !(h.eps > 0.0) {
        return Err(Error::invalid("Adam epsilon must be positive"));
    }
    let t_next = state.t + 1;
    state.m = state.m.zip_map(g, |m, gi| h.beta1 * m + (1.0 - h.beta1) * gi)?;
    state.v = state
        .v
        .zip_map(g, |v, gi| h.beta2 * v + (1.0 - h.beta2) * gi * gi)?;
    let bc1 = 1.0 - numeric::powf(h.beta1, t_next as f64);
    let bc2 = 1.0 - numeric::powf(h.beta2, t_next as f64);
    let update = state.m.zip_map(&state.v, |m, v| {
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        let denom = if h.eps_inside_sqrt {
            numeric::sqrt(v_hat + h.eps)
        } else {
            numeric::sqrt(v_hat) + h.eps
        };
        m_hat / denom
    })?;
    state.t = t_next;
    theta.zip_map(&update, |t, u| t - eta * u)
}

/// One RMSProp step: v = αv + (1−α)g², θ − η·g/√(v+ε).
pub fn rmsprop_step(
    state: &mut OptimizerState,
    theta: &BlockedVector,
    g: &BlockedVector,
    eta: f64,
) -> Result<BlockedVector, Error> {
    check_eta(eta)?;
    let h = state.hyper;
    if !(0.0..1.0).contains(&h.alpha) {
        return Err(Error::invalid("RMSProp alpha must lie in [0, 1)"));
    }
    if !(h.eps > 0.0) {
        return Err(Error::invalid("RMSProp epsilon must be positive"));
    }
    state.v = state
        .v
        .zip_map(g, |v, gi| h.alpha * v + (1.0 - h.alpha) * gi * gi)?;
    state.t += 1;
    let mut out = theta.clone();
    if out.len() != g.len() {
        return Err(Error::ShapeMismatch {
            expected: out.len(),
            got: g.len(),
        });
    }
    for ((o, &gi), &vi) in out
        .as_mut_slice()
        .iter_mut()
        .zip(g.as_slice())
        .zip(state.v.as_slice())
    {
        *o -= eta * gi / numeric::sqrt(vi + h.eps);
    }
    Ok(out)
}

/// θ − γ‖g‖₁·sign(g).
pub fn sign_l1_scaled_step(
    theta: &BlockedVector,
    g: &BlockedVector,
    gamma: f64,
) -> Result<BlockedVector, Error> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid("gamma must be positive and finite"));
    }
    let step = gamma * vector_norm(g, Norm::L1)?;
    if step == 0.0 {
        return Ok(theta.clone());
    }
    let s = sign_vec(g);
    theta.zip_map(&s, |t, si| t - step * si)
}

/// Rescales g onto the ℓ2 ball of radius `threshold` when it lies outside.
pub fn clip_gradient(g: &BlockedVector, threshold: f64) -> Result<BlockedVector, Error> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::invalid("clip threshold must be positive and finite"));
    }
    let norm = vector_norm(g, Norm::L2)?;
    if norm > threshold {
        Ok(g.map(|x| x * threshold / norm))
    } else {
        Ok(g.clone())
    }
}
