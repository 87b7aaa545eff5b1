//! Differentiable objectives with exact gradients and Hessian-vector
//! products: a block-diagonal quadratic, a softmax linear classifier, and
//! smooth scalar test functions for inequality checks.

mod quadratic;
mod smooth;
mod softmax;

pub use quadratic::{build_quadratic, quad_eval, QuadraticObjective, QuadraticSetting};
pub use smooth::{smooth_test_function, SmoothTestFunction};
pub use softmax::{softmax_ce_grad, SampleSet, SoftmaxLinearObjective};

use alloc::vec::Vec;

use crate::block::{BlockSpec, BlockedVector};
use crate::error::Error;

/// Evaluatable loss over a blocked parameter vector.
pub trait Objective {
    fn block_spec(&self) -> &BlockSpec;

    fn loss(&self, theta: &BlockedVector) -> Result<f64, Error>;

    fn gradient(&self, theta: &BlockedVector) -> Result<BlockedVector, Error>;

    /// Action of the Hessian at `theta` on direction `v`.
    fn hvp(&self, theta: &BlockedVector, v: &BlockedVector) -> Result<BlockedVector, Error>;

    /// Per-block Hessian operator norms at `theta`, when known analytically.
    fn exact_block_operator_norms(&self, _theta: &BlockedVector) -> Option<Vec<f64>> {
        None
    }

    /// Global minimum of the loss, when known.
    fn minimum_value(&self) -> Option<f64> {
        None
    }

    /// Per-sample view, for objectives that are means over samples.
    fn as_sampled(&self) -> Option<&dyn SampledObjective> {
        None
    }
}

/// Objective defined as a mean over indexed samples, supporting minibatch
/// evaluation.
pub trait SampledObjective: Objective {
    fn num_samples(&self) -> usize;

    fn loss_subset(&self, theta: &BlockedVector, indices: &[usize]) -> Result<f64, Error>;

    /// Mean gradient over `indices`. A sorted full-range subset reproduces
    /// [`Objective::gradient`] bit for bit.
    fn gradient_subset(
        &self,
        theta: &BlockedVector,
        indices: &[usize],
    ) -> Result<BlockedVector, Error>;
}

pub(crate) fn check_theta(spec: &BlockSpec, theta: &BlockedVector) -> Result<(), Error> {
    if theta.len() != spec.total_dim() {
        return Err(Error::ShapeMismatch {
            expected: spec.total_dim(),
            got: theta.len(),
        });
    }
    if !crate::numeric::all_finite(theta.as_slice()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}
