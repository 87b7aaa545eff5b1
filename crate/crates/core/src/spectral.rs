//! Spectral estimation from Hessian-vector products: per-block operator
//! norms via power iteration, the parameter- and gradient-weighted Hessian
//! norms, the block-diagonal residual, and an empirical Hessian-Lipschitz
//! probe.

use alloc::vec::Vec;

use crate::block::{BlockSpec, BlockedVector, Norm};
use crate::error::Error;
use crate::numeric;
use crate::objectives::Objective;
use crate::optim::TrajectoryRecord;
use crate::rng;

/// Power-iteration controls. `stream_index` separates start vectors drawn
/// from the same seed (block index, operator index).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub stream_index: u64,
}

impl Default for PowerIterOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-9,
            seed: 0,
            stream_index: 0,
        }
    }
}

impl PowerIterOptions {
    /// Budget for nearly degenerate spectra: the default 500-iteration cap
    /// stalls around 1e-4 relative error when the top two eigenvalues differ
    /// by a few parts in 1e4.
    pub fn thorough(seed: u64) -> Self {
        Self {
            max_iters: 100_000,
            tol: 1e-12,
            seed,
            stream_index: 0,
        }
    }

    pub fn with_stream_index(mut self, index: u64) -> Self {
        self.stream_index = index;
        self
    }
}

/// Result of one power iteration run.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerIterOutcome {
    /// Dominant eigenvalue magnitude estimate.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative change of the Rayleigh quotient at the stopping iteration.
    pub achieved_tol: f64,
    /// Rayleigh quotient after each iteration.
    pub rayleigh_history: Vec<f64>,
}

/// Dominant eigenvalue magnitude of a symmetric operator given via
/// matrix-vector products. Stops when successive Rayleigh quotients agree to
/// `tol` relative, or at the iteration cap with `converged = false`.
pub fn power_iteration<F>(
    mut apply: F,
    dim: usize,
    opts: &PowerIterOptions,
) -> Result<PowerIterOutcome, Error>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, Error>,
{
    if dim == 0 {
        return Err(Error::invalid("operator dimension must be positive"));
    }
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }

    let mut stream = rng::stream(opts.seed, "power_iteration.start", opts.stream_index);
    let mut v = rng::standard_normal_vec(&mut stream, dim);
    let norm = crate::block::slice_norm(&v, Norm::L2);
    for x in v.iter_mut() {
        *x /= norm;
    }

    let mut history = Vec::new();
    let mut prev: Option<f64> = None;
    let mut achieved = f64::INFINITY;
    for it in 1..=opts.max_iters {
        let w = apply(&v)?;
        if w.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: dim,
                got: w.len(),
            });
        }
        if !numeric::all_finite(&w) {
            return Err(Error::NonFiniteInput);
        }
        let rho = numeric::dot(&v, &w);
        history.push(rho);
        let w_norm = crate::block::slice_norm(&w, Norm::L2);
        if w_norm == 0.0 {
            return Ok(PowerIterOutcome {
                value: 0.0,
                iterations: it,
                converged: true,
                achieved_tol: 0.0,
                rayleigh_history: history,
            });
        }
        if let Some(p) = prev {
            achieved = (rho - p).abs() / rho.abs().max(f64::MIN_POSITIVE);
            if achieved <= opts.tol {
                return Ok(PowerIterOutcome {
                    value: rho.abs(),
                    iterations: it,
                    converged: true,
                    achieved_tol: achieved,
                    rayleigh_history: history,
                });
            }
        }
        prev = Some(rho);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / w_norm;
        }
    }
    Ok(PowerIterOutcome {
        value: prev.map(|p| p.abs()).unwrap_or(0.0),
        iterations: opts.max_iters,
        converged: false,
        achieved_tol: achieved,
        rayleigh_history: history,
    })
}

/// Operator norm of the Hessian block `b` at `theta`: probe vectors are zero
/// outside the block, so the sub-operator is isolated exactly.
pub fn block_operator_norm(
    objective: &dyn Objective,
    theta: &BlockedVector,
    block: usize,
    opts: &PowerIterOptions,
) -> Result<PowerIterOutcome, Error> {
    let spec = objective.block_spec().clone();
    if block >= spec.num_blocks() {
        return Err(Error::invalid(alloc::format!("block {block} out of range")));
    }
    let range = spec.range(block);
    let dim = range.len();
    let block_opts = opts.with_stream_index(opts.stream_index.wrapping_add(block as u64));
    power_iteration(
        |vb: &[f64]| {
            let mut padded = BlockedVector::zeros(spec.clone());
            padded.as_mut_slice()[range.clone()].copy_from_slice(vb);
            let hv = objective.hvp(theta, &padded)?;
            Ok(hv.as_slice()[range.clone()].to_vec())
        },
        dim,
        &block_opts,
    )
}

/// Per-block operator-norm estimates at one evaluation point.
#[derive(Debug, Clone)]
pub struct BlockSpectralReport {
    pub lambda_b: Vec<f64>,
    pub iterations: Vec<usize>,
    pub achieved_tol: Vec<f64>,
    pub converged: Vec<bool>,
    pub theta: BlockedVector,
}

/// Runs one power iteration per block at `theta`.
pub fn block_spectral_report(
    objective: &dyn Objective,
    theta: &BlockedVector,
    opts: &PowerIterOptions,
) -> Result<BlockSpectralReport, Error> {
    let blocks = objective.block_spec().num_blocks();
    let mut lambda_b = Vec::with_capacity(blocks);
    let mut iterations = Vec::with_capacity(blocks);
    let mut achieved_tol = Vec::with_capacity(blocks);
    let mut converged = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let outcome = block_operator_norm(objective, theta, b, opts)?;
        lambda_b.push(outcome.value);
        iterations.push(outcome.iterations);
        achieved_tol.push(outcome.achieved_tol);
        converged.push(outcome.converged);
    }
    Ok(BlockSpectralReport {
        lambda_b,
        iterations,
        achieved_tol,
        converged,
        theta: theta.clone(),
    })
}

fn check_lambdas(expected_blocks: usize, lambda_b: &[f64]) -> Result<(), Error> {
    if lambda_b.len() != expected_blocks {
        return Err(Error::ShapeMismatch {
            expected: expected_blocks,
            got: lambda_b.len(),
        });
    }
    if lambda_b.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::invalid("block operator norms must be nonnegative"));
    }
    Ok(())
}

/// Dimension-weighted Hessian norm: Σ_b (P_b/P)·λ_b.
pub fn lambda_p(spec: &BlockSpec, lambda_b: &[f64]) -> Result<f64, Error> {
    check_lambdas(spec.num_blocks(), lambda_b)?;
    let p = spec.total_dim() as f64;
    Ok(numeric::pairwise_sum_by(lambda_b.len(), |b| {
        spec.dim(b) as f64 / p * lambda_b[b]
    }))
}

/// Gradient-weighted Hessian norm from per-block gradient ℓ2 norms.
pub fn lambda_g_from_block_norms(block_l2: &[f64], lambda_b: &[f64]) -> Result<f64, Error> {
    check_lambdas(block_l2.len(), lambda_b)?;
    let total: f64 = numeric::pairwise_sum_by(block_l2.len(), |b| block_l2[b] * block_l2[b]);
    if total == 0.0 {
        return Err(Error::StationaryPoint);
    }
    Ok(numeric::pairwise_sum_by(block_l2.len(), |b| {
        block_l2[b] * block_l2[b] / total * lambda_b[b]
    }))
}

/// Gradient-weighted Hessian norm at one point: Σ_b (‖g_b‖₂²/‖g‖₂²)·λ_b.
pub fn lambda_g_pointwise(g: &BlockedVector, lambda_b: &[f64]) -> Result<f64, Error> {
    let norms: Vec<f64> = crate::block::block_norms(g, Norm::L2)?
        .into_iter()
        .map(|(_, n)| n)
        .collect();
    lambda_g_from_block_norms(&norms, lambda_b)
}

/// Supremum of the pointwise gradient-weighted norm over a trajectory's
/// visited points. `lambda_b_at(i)` supplies the block operator norms at
/// point `i`; stationary points are skipped.
pub fn lambda_g_trajectory<F>(record: &TrajectoryRecord, mut lambda_b_at: F) -> Result<f64, Error>
where
    F: FnMut(usize) -> Result<Vec<f64>, Error>,
{
    let mut sup: Option<f64> = None;
    let rows = record
        .steps
        .iter()
        .map(|s| &s.block_l2)
        .chain(record.final_point.iter().map(|f| &f.block_l2));
    for (i, row) in rows.enumerate() {
        let lams = lambda_b_at(i)?;
        match lambda_g_from_block_norms(row, &lams) {
            Ok(v) => sup = Some(sup.map_or(v, |s: f64| s.max(v))),
            Err(Error::StationaryPoint) => continue,
            Err(e) => return Err(e),
        }
    }
    sup.ok_or(Error::StationaryPoint)
}

/// Spectral norm estimate of (full − block-diagonal) Hessian from the two
/// operators. Power iteration runs on the squared residual: the residual's
/// spectrum pairs ±σ, which defeats plain iteration, while squaring makes it
/// PSD with dominant eigenvalue σ_max².
pub fn delta_d_estimate_with<F, G>(
    mut full: F,
    mut blockdiag: G,
    dim: usize,
    opts: &PowerIterOptions,
) -> Result<f64, Error>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, Error>,
    G: FnMut(&[f64]) -> Result<Vec<f64>, Error>,
{
    let mut residual = |v: &[f64]| -> Result<Vec<f64>, Error> {
        let a = full(v)?;
        let b = blockdiag(v)?;
        if a.len() != dim || b.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: dim,
                got: a.len().max(b.len()),
            });
        }
        Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    };
    let outcome = power_iteration(
        |v| {
            let once = residual(v)?;
            residual(&once)
        },
        dim,
        opts,
    )?;
    Ok(numeric::sqrt(outcome.value.max(0.0)))
}

/// Block-diagonal residual norm of an objective's Hessian at `theta`.
pub fn delta_d_estimate(
    objective: &dyn Objective,
    theta: &BlockedVector,
    opts: &PowerIterOptions,
) -> Result<f64, Error> {
    let spec = objective.block_spec().clone();
    let dim = spec.total_dim();
    let full = |v: &[f64]| -> Result<Vec<f64>, Error> {
        let bv = BlockedVector::new(spec.clone(), v.to_vec())?;
        Ok(objective.hvp(theta, &bv)?.into_values())
    };
    let spec2 = objective.block_spec().clone();
    let blockdiag = |v: &[f64]| -> Result<Vec<f64>, Error> {
        let mut out = alloc::vec![0.0; dim];
        for b in 0..spec2.num_blocks() {
            let range = spec2.range(b);
            let mut padded = BlockedVector::zeros(spec2.clone());
            padded.as_mut_slice()[range.clone()].copy_from_slice(&v[range.clone()]);
            let hv = objective.hvp(theta, &padded)?;
            out[range.clone()].copy_from_slice(&hv.as_slice()[range]);
        }
        Ok(out)
    };
    delta_d_estimate_with(full, blockdiag, dim, opts)
}

/// Axis-aligned sampling box around a center point.
#[derive(Debug, Clone)]
pub struct BoxRegion {
    pub center: BlockedVector,
    pub half_width: f64,
}

/// Empirical lower bound on the Hessian's Lipschitz constant: max over
/// sampled pairs of ‖(∇²L(θ) − ∇²L(θ′))v‖₂ / (‖θ − θ′‖₂·‖v‖₂) with random
/// unit probes v.
pub fn rho_h_estimate(
    objective: &dyn Objective,
    region: &BoxRegion,
    pairs: usize,
    seed: u64,
) -> Result<f64, Error> {
    if pairs == 0 {
        return Err(Error::invalid("pair count must be at least 1"));
    }
    if !(region.half_width > 0.0) || !region.half_width.is_finite() {
        return Err(Error::invalid("box half-width must be positive and finite"));
    }
    let spec = objective.block_spec().clone();
    if region.center.len() != spec.total_dim() {
        return Err(Error::ShapeMismatch {
            expected: spec.total_dim(),
            got: region.center.len(),
        });
    }
    let dim = spec.total_dim();
    let mut best = 0.0_f64;
    for k in 0..pairs {
        let mut stream = rng::stream(seed, "rho_h.pairs", k as u64);
        let draw_point = |stream: &mut rand_chacha::ChaCha8Rng| -> BlockedVector {
            let values: Vec<f64> = region
                .center
                .as_slice()
                .iter()
                .map(|&c| {
                    let u: f64 = rand::Rng::random(stream);
                    c + region.half_width * (2.0 * u - 1.0)
                })
                .collect();
            BlockedVector::new(spec.clone(), values).expect("center length already checked")
        };
        let theta_a = draw_point(&mut stream);
        let theta_b = draw_point(&mut stream);
        let mut v = rng::standard_normal_vec(&mut stream, dim);
        let v_norm = crate::block::slice_norm(&v, Norm::L2);
        if v_norm == 0.0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= v_norm;
        }
        let diff_norm = {
            let d: Vec<f64> = theta_a
                .as_slice()
                .iter()
                .zip(theta_b.as_slice())
                .map(|(a, b)| a - b)
                .collect();
            crate::block::slice_norm(&d, Norm::L2)
        };
        if diff_norm == 0.0 {
            continue;
        }
        let probe = BlockedVector::new(spec.clone(), v)?;
        let ha = objective.hvp(&theta_a, &probe)?;
        let hb = objective.hvp(&theta_b, &probe)?;
        let num: Vec<f64> = ha
            .as_slice()
            .iter()
            .zip(hb.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        let ratio = crate::block::slice_norm(&num, Norm::L2) / diff_norm;
        best = best.max(ratio);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{build_quadratic, smooth_test_function, QuadraticSetting};
    use alloc::string::ToString;
    use alloc::vec;

    fn diag_apply(d: Vec<f64>) -> impl FnMut(&[f64]) -> Result<Vec<f64>, Error> {
        move |v: &[f64]| Ok(v.iter().zip(&d).map(|(x, di)| x * di).collect())
    }

    #[test]
    fn dominant_eigenvalue_of_diagonal_operator() {
        let outcome =
            power_iteration(diag_apply(vec![1.0, 5.0, 2.0]), 3, &PowerIterOptions::default())
                .unwrap();
        assert!(outcome.converged);
        assert!((outcome.value - 5.0).abs() < 1e-6);
    }

    #[test]
    fn identity_converges_immediately_to_one() {
        let outcome = power_iteration(
            |v: &[f64]| Ok(v.to_vec()),
            4,
            &PowerIterOptions::default(),
        )
        .unwrap();
        assert!(outcome.converged);
        assert_eq!(outcome.value, 1.0);
        assert!(outcome.iterations <= 2);
    }

    #[test]
    fn rayleigh_sequence_is_monotone_for_psd_operators() {
        let outcome =
            power_iteration(diag_apply(vec![0.5, 3.0, 2.5, 1.0]), 4, &PowerIterOptions::default())
                .unwrap();
        for pair in outcome.rayleigh_history.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12);
        }
    }

    #[test]
    fn zero_operator_reports_zero() {
        let outcome = power_iteration(
            |v: &[f64]| Ok(vec![0.0; v.len()]),
            3,
            &PowerIterOptions::default(),
        )
        .unwrap();
        assert!(outcome.converged);
        assert_eq!(outcome.value, 0.0);
        assert_eq!(outcome.iterations, 1);
    }

    #[test]
    fn block_norm_matches_known_eigenvalue_on_well_separated_block() {
        let obj = build_quadratic(QuadraticSetting::Homo, 21).unwrap();
        let theta = BlockedVector::zeros(obj.block_spec().clone());
        let outcome =
            block_operator_norm(&obj, &theta, 0, &PowerIterOptions::default()).unwrap();
        assert!(outcome.converged);
        assert!((outcome.value - 4998.0).abs() / 4998.0 < 1e-6);
    }

    #[test]
    fn lambda_p_preset_values() {
        let homo = build_quadratic(QuadraticSetting::Homo, 1).unwrap();
        let lp = lambda_p(homo.block_spec(), &homo.block_max_eigenvalues()).unwrap();
        assert!((lp - 4999.0).abs() < 1e-12);

        let hetero = build_quadratic(QuadraticSetting::Hetero, 1).unwrap();
        let lp = lambda_p(hetero.block_spec(), &hetero.block_max_eigenvalues()).unwrap();
        assert!((lp - 5104.0 / 3.0).abs() < 1e-12);

        let spec = BlockSpec::single(7).unwrap();
        assert_eq!(lambda_p(&spec, &[42.0]).unwrap(), 42.0);
    }

    #[test]
    fn lambda_g_pointwise_weights() {
        let hetero = build_quadratic(QuadraticSetting::Hetero, 1).unwrap();
        let lams = hetero.block_max_eigenvalues();
        let spec = hetero.block_spec().clone();

        let mut concentrated = BlockedVector::zeros(spec.clone());
        concentrated.as_mut_slice()[8] = 2.0;
        assert_eq!(lambda_g_pointwise(&concentrated, &lams).unwrap(), 5000.0);

        let uniform = BlockedVector::new(spec.clone(), vec![1.0; 9]).unwrap();
        let lg = lambda_g_pointwise(&uniform, &lams).unwrap();
        assert!((lg - 5104.0 / 3.0).abs() < 1e-12);

        let zero = BlockedVector::zeros(spec);
        let err = lambda_g_pointwise(&zero, &lams).unwrap_err();
        assert_eq!(err.to_string(), "undefined at stationary point");
    }

    #[test]
    fn weighted_norms_are_convex_combinations() {
        let lams = [3.0, 101.0, 5000.0];
        let spec = BlockSpec::new([("a", 3), ("b", 3), ("c", 3)]).unwrap();
        let lp = lambda_p(&spec, &lams).unwrap();
        assert!((3.0..=5000.0).contains(&lp));
        let g = BlockedVector::new(spec, vec![0.1, 0.0, 0.0, 2.0, 1.0, 0.0, 0.5, 0.5, 0.5]).unwrap();
        let lg = lambda_g_pointwise(&g, &lams).unwrap();
        assert!((3.0..=5000.0).contains(&lg));
    }

    #[test]
    fn quadratic_block_diagonal_residual_is_zero() {
        for setting in [QuadraticSetting::Homo, QuadraticSetting::Hetero] {
            let obj = build_quadratic(setting, 9).unwrap();
            let theta = BlockedVector::zeros(obj.block_spec().clone());
            let delta = delta_d_estimate(&obj, &theta, &PowerIterOptions::default()).unwrap();
            assert!(delta <= 1e-9, "delta_D = {delta}");
        }
    }

    #[test]
    fn two_block_toy_recovers_coupling_norm() {
        // H = [[A, C], [C^T, B]] with known singular values of C.
        let a = [2.0, 0.3, 0.3, 1.0];
        let b = [1.5, -0.2, -0.2, 0.5];
        let c = [1.0, 0.0, 0.0, 0.5];
        let full = move |v: &[f64]| -> Result<Vec<f64>, Error> {
            let (x, y) = v.split_at(2);
            Ok(vec![
                a[0] * x[0] + a[1] * x[1] + c[0] * y[0] + c[1] * y[1],
                a[2] * x[0] + a[3] * x[1] + c[2] * y[0] + c[3] * y[1],
                c[0] * x[0] + c[2] * x[1] + b[0] * y[0] + b[1] * y[1],
                c[1] * x[0] + c[3] * x[1] + b[2] * y[0] + b[3] * y[1],
            ])
        };
        let blockdiag = move |v: &[f64]| -> Result<Vec<f64>, Error> {
            let (x, y) = v.split_at(2);
            Ok(vec![
                a[0] * x[0] + a[1] * x[1],
                a[2] * x[0] + a[3] * x[1],
                b[0] * y[0] + b[1] * y[1],
                b[2] * y[0] + b[3] * y[1],
            ])
        };
        let delta =
            delta_d_estimate_with(full, blockdiag, 4, &PowerIterOptions::default()).unwrap();
        assert!((delta - 1.0).abs() < 1e-9, "delta_D = {delta}");
    }

    #[test]
    fn constant_hessian_has_zero_lipschitz_estimate() {
        let obj = build_quadratic(QuadraticSetting::Hetero, 4).unwrap();
        let region = BoxRegion {
            center: BlockedVector::zeros(obj.block_spec().clone()),
            half_width: 1.0,
        };
        let rho = rho_h_estimate(&obj, &region, 50, 7).unwrap();
        assert!(rho <= 1e-9, "rho_H = {rho}");
    }

    #[test]
    fn cubic_well_lipschitz_estimate_is_bracketed() {
        let f = smooth_test_function("cubic_well", 3).unwrap();
        let region = BoxRegion {
            center: BlockedVector::zeros(f.block_spec().clone()),
            half_width: 1.0,
        };
        let rho = rho_h_estimate(&f, &region, 1000, 3).unwrap();
        assert!(rho <= 2.0 + 1e-12, "rho_H = {rho}");
        assert!(rho >= 1.0, "rho_H = {rho}");
    }

    #[test]
    fn trajectory_supremum_skips_stationary_points() {
        use crate::optim::{run_sequence, RunOptions, ScheduleSpec, StepRule};
        let obj = build_quadratic(QuadraticSetting::Hetero, 11).unwrap();
        let lams = obj.block_max_eigenvalues();
        let theta0 = BlockedVector::new(obj.block_spec().clone(), vec![1.0; 9]).unwrap();
        let record = run_sequence(
            &obj,
            StepRule::Gd,
            &ScheduleSpec::quad_classical_gd(1.0, 5000.0),
            &theta0,
            &RunOptions::deterministic(200),
        )
        .unwrap();
        let sup = lambda_g_trajectory(&record, |_| Ok(lams.clone())).unwrap();
        assert!((3.0..=5000.0).contains(&sup));
        let single = lambda_g_from_block_norms(&record.steps[0].block_l2, &lams).unwrap();
        assert!(sup >= single);
    }
}
