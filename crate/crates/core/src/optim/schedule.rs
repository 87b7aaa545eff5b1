//! Learning-rate rules: constant, curvature-aware rates for gradient and
//! sign descent (deterministic, stochastic, and noise-adapted forms), the
//! quadratic-optimal rates, and ℓ1 scaling.

use crate::block::{vector_norm, BlockedVector, Norm};
use crate::error::Error;
use crate::numeric;

/// Which learning-rate rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// η = value.
    Constant,
    /// η = ζ·min(1/Λ_G, 1/√(ρ_H‖g‖₂)).
    TheoremGrad,
    /// η = ζ·min(‖g‖₁/(Λ_P·P), √(‖g‖₁/(ρ_H·P^{3/2}))).
    TheoremSign,
    /// η = ζ·min(1/((1+σ₂)Λ_G), 1/(2√((1+σ₃)ρ_H‖g‖₂))).
    StochasticTheoremGrad,
    /// Same rate form as [`ScheduleKind::TheoremSign`], applied to minibatch
    /// runs.
    StochasticTheoremSign,
    /// η = ζ·min(3(1−2σ₂)‖g‖₁/(5Λ_P·P), √(3(1−2σ₂)‖g‖₁/(5ρ_H·P^{3/2}))),
    /// requiring σ₂ < 1/2.
    NoiseAdaptedSign,
    /// η = ‖g‖₁/(P·Λ_P).
    QuadOptimalSign,
    /// η = 2/(λ_min + λ_max).
    QuadClassicalGd,
    /// η = γ·‖g‖₁.
    L1Scaled,
}

/// A learning-rate rule plus the constants it needs. Construct through the
/// per-kind constructors, then adjust ζ with [`ScheduleSpec::with_zeta`] /
/// [`ScheduleSpec::with_zeta_decay`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub zeta: f64,
    /// When set, ζ decays linearly from `zeta` to this value over a run.
    pub zeta_end: Option<f64>,
    pub value: Option<f64>,
    pub lambda_g: Option<f64>,
    pub lambda_p: Option<f64>,
    pub rho_h: Option<f64>,
    pub sigma2: Option<f64>,
    pub sigma3: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
}

impl ScheduleSpec {
    fn base(kind: ScheduleKind) -> Self {
        Self {
            kind,
            zeta: 1.0,
            zeta_end: None,
            value: None,
            lambda_g: None,
            lambda_p: None,
            rho_h: None,
            sigma2: None,
            sigma3: None,
            gamma: None,
            lambda_min: None,
            lambda_max: None,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            value: Some(value),
            ..Self::base(ScheduleKind::Constant)
        }
    }

    pub fn theorem_grad(lambda_g: f64, rho_h: f64) -> Self {
        Self {
            lambda_g: Some(lambda_g),
            rho_h: Some(rho_h),
            ..Self::base(ScheduleKind::TheoremGrad)
        }
    }

    pub fn theorem_sign(lambda_p: f64, rho_h: f64) -> Self {
        Self {
            lambda_p: Some(lambda_p),
            rho_h: Some(rho_h),
            ..Self::base(ScheduleKind::TheoremSign)
        }
    }

    pub fn stochastic_theorem_grad(lambda_g: f64, rho_h: f64, sigma2: f64, sigma3: f64) -> Self {
        Self {
            lambda_g: Some(lambda_g),
            rho_h: Some(rho_h),
            sigma2: Some(sigma2),
            sigma3: Some(sigma3),
            ..Self::base(ScheduleKind::StochasticTheoremGrad)
        }
    }

    pub fn stochastic_theorem_sign(lambda_p: f64, rho_h: f64) -> Self {
        Self {
            lambda_p: Some(lambda_p),
            rho_h: Some(rho_h),
            ..Self::base(ScheduleKind::StochasticTheoremSign)
        }
    }

    pub fn noise_adapted_sign(lambda_p: f64, rho_h: f64, sigma2: f64) -> Self {
        Self {
            lambda_p: Some(lambda_p),
            rho_h: Some(rho_h),
            sigma2: Some(sigma2),
            ..Self::base(ScheduleKind::NoiseAdaptedSign)
        }
    }

    pub fn quad_optimal_sign(lambda_p: f64) -> Self {
        Self {
            lambda_p: Some(lambda_p),
            ..Self::base(ScheduleKind::QuadOptimalSign)
        }
    }

    pub fn quad_classical_gd(lambda_min: f64, lambda_max: f64) -> Self {
        Self {
            lambda_min: Some(lambda_min),
            lambda_max: Some(lambda_max),
            ..Self::base(ScheduleKind::QuadClassicalGd)
        }
    }

    pub fn l1_scaled(gamma: f64) -> Self {
        Self {
            gamma: Some(gamma),
            ..Self::base(ScheduleKind::L1Scaled)
        }
    }

    pub fn with_zeta(mut self, zeta: f64) -> Self {
        self.zeta = zeta;
        self
    }

    pub fn with_zeta_decay(mut self, zeta_end: f64) -> Self {
        self.zeta_end = Some(zeta_end);
        self
    }

    /// Effective ζ at step `t` of a `total`-step run: linear interpolation
    /// towards `zeta_end` when set, otherwise the constant ζ.
    pub fn zeta_at(&self, t: usize, total: usize) -> f64 {
        match self.zeta_end {
            Some(end) if total > 1 => {
                let frac = t as f64 / (total - 1) as f64;
                self.zeta + (end - self.zeta) * frac
            }
            _ => self.zeta,
        }
    }

    /// Checks that the constants required by the kind are present and in
    /// range. ρ_H = 0 and σ = 0 are allowed; ζ must lie in (0, 1].
    pub fn validate(&self) -> Result<(), Error> {
        fn positive(v: Option<f64>, name: &'static str) -> Result<f64, Error> {
            let v = v.ok_or(Error::MissingConstant(name))?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(alloc::format!(
                    "schedule constant `{name}` must be positive and finite"
                )));
            }
            Ok(v)
        }
        fn nonnegative(v: Option<f64>, name: &'static str) -> Result<f64, Error> {
            let v = v.ok_or(Error::MissingConstant(name))?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(alloc::format!(
                    "schedule constant `{name}` must be nonnegative and finite"
                )));
            }
            Ok(v)
        }

        for zeta in core::iter::once(self.zeta).chain(self.zeta_end) {
            if !(zeta > 0.0 && zeta <= 1.0) {
                return Err(Error::invalid("zeta must lie in (0, 1]"));
            }
        }
        match self.kind {
            ScheduleKind::Constant => {
                positive(self.value, "value")?;
            }
            ScheduleKind::TheoremGrad => {
                positive(self.lambda_g, "Lambda_G")?;
                nonnegative(self.rho_h, "rho_H")?;
            }
            ScheduleKind::TheoremSign | ScheduleKind::StochasticTheoremSign => {
                positive(self.lambda_p, "Lambda_P")?;
                nonnegative(self.rho_h, "rho_H")?;
            }
            ScheduleKind::StochasticTheoremGrad => {
                positive(self.lambda_g, "Lambda_G")?;
                nonnegative(self.rho_h, "rho_H")?;
                nonnegative(self.sigma2, "sigma_2")?;
                nonnegative(self.sigma3, "sigma_3")?;
            }
            ScheduleKind::NoiseAdaptedSign => {
                positive(self.lambda_p, "Lambda_P")?;
                nonnegative(self.rho_h, "rho_H")?;
                let s2 = nonnegative(self.sigma2, "sigma_2")?;
                if s2 >= 0.5 {
                    return Err(Error::invalid(
                        "noise-adapted sign rate requires sigma_2 < 1/2",
                    ));
                }
            }
            ScheduleKind::QuadOptimalSign => {
                positive(self.lambda_p, "Lambda_P")?;
            }
            ScheduleKind::QuadClassicalGd => {
                let min = positive(self.lambda_min, "lambda_min")?;
                let max = positive(self.lambda_max, "lambda_max")?;
                if max < min {
                    return Err(Error::invalid("lambda_max must be at least lambda_min"));
                }
            }
            ScheduleKind::L1Scaled => {
                positive(self.gamma, "gamma")?;
            }
        }
        Ok(())
    }
}

/// min(a, b) where `b` may be +∞ when the curvature term vanishes.
fn finite_min(a: f64, b: f64) -> f64 {
    if b.is_finite() {
        a.min(b)
    } else {
        a
    }
}

/// η for one step under `spec`, given the current full gradient and the
/// total parameter count P.
pub fn schedule_lr(spec: &ScheduleSpec, g: &BlockedVector, p: usize) -> Result<f64, Error> {
    spec.validate()?;
    if p == 0 {
        return Err(Error::invalid("parameter count P must be positive"));
    }
    let p_f = p as f64;
    let zeta = spec.zeta;
    let eta = match spec.kind {
        ScheduleKind::Constant => spec.value.unwrap(),
        ScheduleKind::TheoremGrad => {
            let lambda_g = spec.lambda_g.unwrap();
            let rho = spec.rho_h.unwrap();
            let g2 = vector_norm(g, Norm::L2)?;
            let curvature_term = if rho * g2 > 0.0 {
                1.0 / numeric::sqrt(rho * g2)
            } else {
                f64::INFINITY
            };
            zeta * finite_min(1.0 / lambda_g, curvature_term)
        }
        ScheduleKind::TheoremSign | ScheduleKind::StochasticTheoremSign => {
            let lambda_p = spec.lambda_p.unwrap();
            let rho = spec.rho_h.unwrap();
            let g1 = vector_norm(g, Norm::L1)?;
            let curvature_term = if rho > 0.0 {
                numeric::sqrt(g1 / (rho * p_f * numeric::sqrt(p_f)))
            } else {
                f64::INFINITY
            };
            zeta * finite_min(g1 / (lambda_p * p_f), curvature_term)
        }
        ScheduleKind::StochasticTheoremGrad => {
            let lambda_g = spec.lambda_g.unwrap();
            let rho = spec.rho_h.unwrap();
            let s2 = spec.sigma2.unwrap();
            let s3 = spec.sigma3.unwrap();
            let g2 = vector_norm(g, Norm::L2)?;
            let curvature_term = if rho * g2 > 0.0 {
                1.0 / (2.0 * numeric::sqrt((1.0 + s3) * rho * g2))
            } else {
                f64::INFINITY
            };
            zeta * finite_min(1.0 / ((1.0 + s2) * lambda_g), curvature_term)
        }
        ScheduleKind::NoiseAdaptedSign => {
            let lambda_p = spec.lambda_p.unwrap();
            let rho = spec.rho_h.unwrap();
            let s2 = spec.sigma2.unwrap();
            let g1 = vector_norm(g, Norm::L1)?;
            let damp = 3.0 * (1.0 - 2.0 * s2);
            let curvature_term = if rho > 0.0 {
                numeric::sqrt(damp * g1 / (5.0 * rho * p_f * numeric::sqrt(p_f)))
            } else {
                f64::INFINITY
            };
            zeta * finite_min(damp * g1 / (5.0 * lambda_p * p_f), curvature_term)
        }
        ScheduleKind::QuadOptimalSign => {
            let lambda_p = spec.lambda_p.unwrap();
            vector_norm(g, Norm::L1)? / (p_f * lambda_p)
        }
        ScheduleKind::QuadClassicalGd => {
            2.0 / (spec.lambda_min.unwrap() + spec.lambda_max.unwrap())
        }
        ScheduleKind::L1Scaled => spec.gamma.unwrap() * vector_norm(g, Norm::L1)?,
    };
    Ok(eta)
}
