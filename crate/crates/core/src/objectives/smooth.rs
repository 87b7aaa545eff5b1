//! Smooth scalar test functions with hand-derived Hessian-Lipschitz bounds,
//! used to exercise the cubic descent inequalities away from the quadratic
//! special case.

use alloc::format;

use crate::block::{BlockSpec, BlockedVector};
use crate::error::Error;
use crate::numeric;
use crate::objectives::{check_theta, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    CubicWell,
    Quartic,
}

/// Named smooth function over a single parameter block.
///
/// `cubic_well`: L(θ) = Σ(θ_i³/3 + θ_i), Hessian diag(2θ_i), Hessian-Lipschitz
/// constant 2 everywhere.
///
/// `quartic`: L(θ) = ¼‖θ‖₂⁴, Hessian ‖θ‖²I + 2θθᵀ, Hessian-Lipschitz constant
/// at most 6√dim on the box ‖θ‖_∞ ≤ 1.
#[derive(Debug, Clone)]
pub struct SmoothTestFunction {
    kind: Kind,
    spec: BlockSpec,
}

/// Looks up a test function by name; dim is the parameter count.
pub fn smooth_test_function(name: &str, dim: usize) -> Result<SmoothTestFunction, Error> {
    let kind = match name {
        "cubic_well" => Kind::CubicWell,
        "quartic" => Kind::Quartic,
        _ => return Err(Error::invalid(format!("unknown test function `{name}`"))),
    };
    Ok(SmoothTestFunction {
        kind,
        spec: BlockSpec::single(dim)?,
    })
}

impl SmoothTestFunction {
    pub fn name(&self) -> &'static str {
        match self.kind {
            Kind::CubicWell => "cubic_well",
            Kind::Quartic => "quartic",
        }
    }

    /// Upper bound on the Hessian's Lipschitz constant, valid on the box
    /// ‖θ‖_∞ ≤ 1 (global for `cubic_well`).
    pub fn rho_h_bound(&self) -> f64 {
        match self.kind {
            Kind::CubicWell => 2.0,
            Kind::Quartic => 6.0 * numeric::sqrt(self.spec.total_dim() as f64),
        }
    }
}

impl Objective for SmoothTestFunction {
    fn block_spec(&self) -> &BlockSpec {
        &self.spec
    }

    fn loss(&self, theta: &BlockedVector) -> Result<f64, Error> {
        check_theta(&self.spec, theta)?;
        let t = theta.as_slice();
        Ok(match self.kind {
            Kind::CubicWell => {
                numeric::pairwise_sum_by(t.len(), |i| t[i] * t[i] * t[i] / 3.0 + t[i])
            }
            Kind::Quartic => {
                let sq = numeric::pairwise_sum_by(t.len(), |i| t[i] * t[i]);
                0.25 * sq * sq
            }
        })
    }

    fn gradient(&self, theta: &BlockedVector) -> Result<BlockedVector, Error> {
        check_theta(&self.spec, theta)?;
        Ok(match self.kind {
            Kind::CubicWell => theta.map(|x| x * x + 1.0),
            Kind::Quartic => {
                let t = theta.as_slice();
                let sq = numeric::pairwise_sum_by(t.len(), |i| t[i] * t[i]);
                theta.map(|x| sq * x)
            }
        })
    }

    fn hvp(&self, theta: &BlockedVector, v: &BlockedVector) -> Result<BlockedVector, Error> {
        check_theta(&self.spec, theta)?;
        check_theta(&self.spec, v)?;
        match self.kind {
            Kind::CubicWell => theta.zip_map(v, |x, vi| 2.0 * x * vi),
            Kind::Quartic => {
                let t = theta.as_slice();
                let sq = numeric::pairwise_sum_by(t.len(), |i| t[i] * t[i]);
                let tv = theta.dot(v)?;
                theta.zip_map(v, |x, vi| sq * vi + 2.0 * tv * x)
            }
        }
    }

    fn minimum_value(&self) -> Option<f64> {
        match self.kind {
            Kind::CubicWell => None,
            Kind::Quartic => Some(0.0),
        }
    }
}
