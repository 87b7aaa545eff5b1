//! Numerical laboratory for block-structured optimization.
//!
//! The crate provides the pieces needed to study how sign-based and
//! gradient-based update rules interact with block-wise curvature:
//!
//! - [`block`]: blocked parameter vectors, norms, sign and steepest-descent ops
//! - [`objectives`]: quadratic, softmax linear-head, and smooth scalar test objectives
//!   with exact gradients and Hessian-vector products
//! - [`optim`]: step rules (GD, sign, momentum, Adam, RMSProp), learning-rate
//!   schedules, the trajectory runner, and the linear-head one-epoch lab
//! - [`spectral`]: power-iteration operator norms per block, the weighted curvature
//!   averages Λ_G / Λ_P, the block-diagonal residual δ_D, and a ρ_H probe
//! - [`metrics`]: Gini dispersion, normalized block norms, iteration-complexity
//!   measurement, and minibatch noise-constant estimators
//! - [`transformer`]: analytic LayerNorm/RMSNorm Jacobians, layer Jacobian
//!   assembly, softmax-row Jacobians, attention gradient bounds, entropy ratios
//!
//! Everything is deterministic: all randomness flows through named, seeded
//! generators (see [`rng`]). The crate is `no_std`-compatible with `alloc`.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` guards reject NaN; the comparison-op rewrite would let it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod block;
pub mod error;
pub mod metrics;
pub mod numeric;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod spectral;
pub mod transformer;

pub use block::{BlockSpec, BlockedVector, Norm};
pub use error::Error;
pub use objectives::Objective;
