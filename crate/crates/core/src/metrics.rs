//! Heterogeneity statistics (Gini, normalized block norms, layer ratios),
//! iteration-complexity measurement, minibatch noise-constant estimation,
//! and gradient/Hessian-norm pairing across blocks.

use alloc::string::String;
use alloc::vec::Vec;

use crate::block::{block_norms, BlockedVector, Norm};
use crate::error::Error;
use crate::numeric;
use crate::objectives::{Objective, SampledObjective};
use crate::optim::TrajectoryRecord;
use crate::rng;
use crate::spectral::{
    block_spectral_report, delta_d_estimate, lambda_g_pointwise, lambda_p, rho_h_estimate,
    BoxRegion, PowerIterOptions,
};

/// Gini coefficient of a nonnegative sample, in [0, (n−1)/n].
///
/// Computed by the sorted equivalent of the pairwise double sum:
/// G = Σ_i (2i − n − 1)·x_(i) / (n·Σ_i x_i) with 1-based sorted index i.
pub fn gini(values: &[f64]) -> Result<f64, Error> {
    if values.is_empty() {
        return Err(Error::invalid("gini needs at least one value"));
    }
    if !numeric::all_finite(values) {
        return Err(Error::NonFiniteInput);
    }
    if values.iter().any(|&x| x < 0.0) {
        return Err(Error::invalid("gini values must be nonnegative"));
    }
    let total = numeric::pairwise_sum(values);
    if total <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let weighted = numeric::pairwise_sum_by(n, |i| (2.0 * (i + 1) as f64 - n as f64 - 1.0) * sorted[i]);
    Ok((weighted / (n as f64 * total)).max(0.0))
}

/// Per-block ‖g_b‖₂/√P_b, normalized to sum to 1.
pub fn normalized_block_grad_norms(g: &BlockedVector) -> Result<Vec<f64>, Error> {
    let spec = g.spec();
    let raw: Vec<f64> = block_norms(g, Norm::L2)?
        .iter()
        .enumerate()
        .map(|(b, (_, n))| n / numeric::sqrt(spec.dim(b) as f64))
        .collect();
    let total = numeric::pairwise_sum(&raw);
    if total == 0.0 {
        return Err(Error::ZeroGradient);
    }
    Ok(raw.iter().map(|r| r / total).collect())
}

/// Per-layer share G_l / Σ G_l of nonnegative norm sums.
pub fn layer_ratio(sums: &[f64]) -> Result<Vec<f64>, Error> {
    if sums.is_empty() {
        return Err(Error::invalid("layer_ratio needs at least one layer"));
    }
    if !numeric::all_finite(sums) {
        return Err(Error::NonFiniteInput);
    }
    if sums.iter().any(|&x| x < 0.0) {
        return Err(Error::invalid("layer sums must be nonnegative"));
    }
    let total = numeric::pairwise_sum(sums);
    if total == 0.0 {
        return Err(Error::ZeroGradient);
    }
    Ok(sums.iter().map(|s| s / total).collect())
}

/// How a complexity measurement was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplexityMode {
    Deterministic,
    Stochastic { runs: usize },
}

/// First hitting time, or the exhausted budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplexityOutcome {
    Reached(usize),
    NotReached { budget: usize },
}

/// Result of an iteration-complexity measurement at accuracy ε in norm q.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityMeasurement {
    pub epsilon: f64,
    pub q: u32,
    /// Dimension-normalized target P^{1/q}·ε the q-norm is compared against.
    pub threshold: f64,
    pub mode: ComplexityMode,
    pub outcome: ComplexityOutcome,
}

fn complexity_threshold(p: usize, epsilon: f64, q: u32) -> Result<f64, Error> {
    if p == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon must be positive"));
    }
    match q {
        1 => Ok(p as f64 * epsilon),
        2 => Ok(numeric::sqrt(p as f64) * epsilon),
        _ => Err(Error::invalid("q must be 1 or 2")),
    }
}

fn first_hit(norms: &[f64], threshold: f64) -> Option<usize> {
    norms.iter().position(|&n| n <= threshold)
}

/// First index t with ‖g_t‖_q ≤ P^{1/q}·ε over a logged norm sequence.
pub fn iteration_complexity_from_norms(
    grad_norms_q: &[f64],
    p: usize,
    epsilon: f64,
    q: u32,
) -> Result<ComplexityMeasurement, Error> {
    let threshold = complexity_threshold(p, epsilon, q)?;
    let outcome = match first_hit(grad_norms_q, threshold) {
        Some(t) => ComplexityOutcome::Reached(t),
        None => ComplexityOutcome::NotReached {
            budget: grad_norms_q.len(),
        },
    };
    Ok(ComplexityMeasurement {
        epsilon,
        q,
        threshold,
        mode: ComplexityMode::Deterministic,
        outcome,
    })
}

/// Deterministic complexity of one run, read from the full-batch norm column.
pub fn iteration_complexity(
    record: &TrajectoryRecord,
    p: usize,
    epsilon: f64,
    q: u32,
) -> Result<ComplexityMeasurement, Error> {
    let norm = match q {
        1 => Norm::L1,
        _ => Norm::L2,
    };
    iteration_complexity_from_norms(&record.point_grad_norms(norm), p, epsilon, q)
}

/// Smallest t at which at most half of the runs still have all logged
/// q-norms above the threshold through t.
pub fn stochastic_iteration_complexity(
    runs: &[TrajectoryRecord],
    p: usize,
    epsilon: f64,
    q: u32,
) -> Result<ComplexityMeasurement, Error> {
    if runs.is_empty() {
        return Err(Error::invalid("stochastic mode needs at least one run"));
    }
    let threshold = complexity_threshold(p, epsilon, q)?;
    let norm = match q {
        1 => Norm::L1,
        _ => Norm::L2,
    };
    let mut hits = Vec::with_capacity(runs.len());
    let mut budget = 0usize;
    for run in runs {
        let norms = run.point_grad_norms(norm);
        budget = budget.max(norms.len());
        hits.push(first_hit(&norms, threshold).unwrap_or(usize::MAX));
    }
    let m = runs.len();
    let mut outcome = ComplexityOutcome::NotReached { budget };
    for t in 0..budget {
        let surviving = hits.iter().filter(|&&h| h > t).count();
        if 2 * surviving <= m {
            outcome = ComplexityOutcome::Reached(t);
            break;
        }
    }
    Ok(ComplexityMeasurement {
        epsilon,
        q,
        threshold,
        mode: ComplexityMode::Stochastic { runs: m },
        outcome,
    })
}

/// Minibatch sampling controls for the noise-constant estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseOptions {
    pub batch_size: usize,
    pub draws: usize,
    pub seed: u64,
}

/// Empirical noise constants at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    /// max over kept coordinates of mean|ĝ_i − g_i|² / g_i².
    pub sigma2: f64,
    /// mean over draws of ‖ĝ − g‖₂³ / ‖g‖₂³.
    pub sigma3: f64,
    /// Coordinates with |g_i| ≤ 1e-8·‖g‖_∞, excluded from σ₂.
    pub excluded_coordinates: usize,
    pub draws: usize,
}

/// Noise constants from an explicit list of index batches.
pub fn noise_constants_from_batches(
    objective: &dyn SampledObjective,
    theta: &BlockedVector,
    batches: &[Vec<usize>],
) -> Result<NoiseEstimate, Error> {
    if batches.len() < 2 {
        return Err(Error::invalid("noise estimation needs at least 2 draws"));
    }
    let g = objective.gradient(theta)?;
    let g_l2 = crate::block::vector_norm(&g, Norm::L2)?;
    if g_l2 == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let g_linf = crate::block::vector_norm(&g, Norm::Linf)?;
    let tau = 1e-8 * g_linf;
    let dim = g.len();
    let m = batches.len() as f64;

    let mut sq_err = alloc::vec![0.0f64; dim];
    let mut cube_sum = 0.0f64;
    for batch in batches {
        let g_hat = objective.gradient_subset(theta, batch)?;
        let mut l2_sq = 0.0;
        for (i, (hi, gi)) in g_hat.as_slice().iter().zip(g.as_slice()).enumerate() {
            let d = hi - gi;
            sq_err[i] += d * d;
            l2_sq += d * d;
        }
        let l2 = numeric::sqrt(l2_sq);
        cube_sum += l2 * l2 * l2;
    }
    let sigma3 = cube_sum / m / (g_l2 * g_l2 * g_l2);
    let mut sigma2 = 0.0f64;
    let mut excluded = 0usize;
    for (i, gi) in g.as_slice().iter().enumerate() {
        if gi.abs() <= tau {
            excluded += 1;
            continue;
        }
        sigma2 = sigma2.max(sq_err[i] / m / (gi * gi));
    }
    Ok(NoiseEstimate {
        sigma2,
        sigma3,
        excluded_coordinates: excluded,
        draws: batches.len(),
    })
}

/// Noise constants from `draws` seeded without-replacement batches.
pub fn noise_constants(
    objective: &dyn SampledObjective,
    theta: &BlockedVector,
    opts: &NoiseOptions,
) -> Result<NoiseEstimate, Error> {
    let n = objective.num_samples();
    if opts.batch_size == 0 || opts.batch_size > n {
        return Err(Error::invalid(alloc::format!(
            "batch size must be in 1..={n}"
        )));
    }
    if opts.draws < 2 {
        return Err(Error::invalid("noise estimation needs at least 2 draws"));
    }
    let batches: Vec<Vec<usize>> = (0..opts.draws)
        .map(|k| {
            let mut stream = rng::stream(opts.seed, "noise.batches", k as u64);
            rng::sample_without_replacement(&mut stream, n, opts.batch_size)
        })
        .collect();
    noise_constants_from_batches(objective, theta, &batches)
}

/// One block's normalized gradient norm paired with its operator norm.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHessianPoint {
    pub block: String,
    pub normalized_grad: f64,
    pub lambda: f64,
}

/// Scatter export of per-block gradient scale against curvature scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHessianPairs {
    pub points: Vec<GradHessianPoint>,
    /// Pearson correlation of (ln ḡ_b, ln λ_b) over blocks with positive
    /// entries; `None` with fewer than two usable blocks.
    pub log_correlation: Option<f64>,
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = numeric::pairwise_sum(xs) / nf;
    let my = numeric::pairwise_sum(ys) / nf;
    let cov = numeric::pairwise_sum_by(n, |i| (xs[i] - mx) * (ys[i] - my));
    let vx = numeric::pairwise_sum_by(n, |i| (xs[i] - mx) * (xs[i] - mx));
    let vy = numeric::pairwise_sum_by(n, |i| (ys[i] - my) * (ys[i] - my));
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / numeric::sqrt(vx * vy))
}

/// Pairs each block's ‖g_b‖₂/√P_b with the block operator norm λ_b.
pub fn grad_hessian_pairs(
    objective: &dyn Objective,
    theta: &BlockedVector,
    lambda_b: &[f64],
) -> Result<GradHessianPairs, Error> {
    let spec = objective.block_spec().clone();
    if lambda_b.len() != spec.num_blocks() {
        return Err(Error::ShapeMismatch {
            expected: spec.num_blocks(),
            got: lambda_b.len(),
        });
    }
    let g = objective.gradient(theta)?;
    let norms = block_norms(&g, Norm::L2)?;
    let points: Vec<GradHessianPoint> = norms
        .iter()
        .enumerate()
        .map(|(b, (name, n))| GradHessianPoint {
            block: String::from(*name),
            normalized_grad: n / numeric::sqrt(spec.dim(b) as f64),
            lambda: lambda_b[b],
        })
        .collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for p in &points {
        if p.normalized_grad > 0.0 && p.lambda > 0.0 {
            xs.push(numeric::ln(p.normalized_grad));
            ys.push(numeric::ln(p.lambda));
        }
    }
    Ok(GradHessianPairs {
        points,
        log_correlation: pearson(&xs, &ys),
    })
}

/// Controls for the one-shot heterogeneity summary.
#[derive(Debug, Clone)]
pub struct HeterogeneityOptions {
    pub power_iter: PowerIterOptions,
    pub rho_pairs: usize,
    pub rho_half_width: f64,
    pub noise: Option<NoiseOptions>,
}

impl Default for HeterogeneityOptions {
    fn default() -> Self {
        Self {
            power_iter: PowerIterOptions::thorough(0),
            rho_pairs: 64,
            rho_half_width: 1.0,
            noise: None,
        }
    }
}

/// Point summary of gradient and curvature heterogeneity.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneityReport {
    pub gini: f64,
    pub normalized_block_norms: Vec<f64>,
    pub layer_ratios: Vec<f64>,
    pub lambda_g: f64,
    pub lambda_p: f64,
    pub delta_d: f64,
    pub rho_h: f64,
    pub sigma2: Option<f64>,
    pub sigma3: Option<f64>,
}

/// Assembles the heterogeneity summary at one evaluation point.
pub fn heterogeneity_report(
    objective: &dyn Objective,
    theta: &BlockedVector,
    opts: &HeterogeneityOptions,
) -> Result<HeterogeneityReport, Error> {
    let g = objective.gradient(theta)?;
    let normalized = normalized_block_grad_norms(&g)?;
    let gini_value = gini(&normalized)?;
    let block_l2: Vec<f64> = block_norms(&g, Norm::L2)?
        .into_iter()
        .map(|(_, n)| n)
        .collect();
    let layer_ratios = layer_ratio(&block_l2)?;

    let lambda_b = match objective.exact_block_operator_norms(theta) {
        Some(l) => l,
        None => block_spectral_report(objective, theta, &opts.power_iter)?.lambda_b,
    };
    let lambda_p_value = lambda_p(objective.block_spec(), &lambda_b)?;
    let lambda_g_value = lambda_g_pointwise(&g, &lambda_b)?;
    let delta_d = delta_d_estimate(objective, theta, &opts.power_iter)?;
    let region = BoxRegion {
        center: theta.clone(),
        half_width: opts.rho_half_width,
    };
    let rho_h = rho_h_estimate(objective, &region, opts.rho_pairs, opts.power_iter.seed)?;

    let (sigma2, sigma3) = match &opts.noise {
        Some(noise_opts) => {
            let sampled = objective.as_sampled().ok_or(Error::NotSampled)?;
            let est = noise_constants(sampled, theta, noise_opts)?;
            (Some(est.sigma2), Some(est.sigma3))
        }
        None => (None, None),
    };

    Ok(HeterogeneityReport {
        gini: gini_value,
        normalized_block_norms: normalized,
        layer_ratios,
        lambda_g: lambda_g_value,
        lambda_p: lambda_p_value,
        delta_d,
        rho_h,
        sigma2,
        sigma3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockSpec;
    use crate::objectives::{build_quadratic, QuadraticSetting, SoftmaxLinearObjective};
    use alloc::string::ToString;
    use alloc::vec;

    fn gini_brute_force(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut acc = 0.0;
        for a in values {
            for b in values {
                acc += (a - b).abs();
            }
        }
        acc / (2.0 * n * n * mean)
    }

    #[test]
    fn gini_pinned_values() {
        assert_eq!(gini(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(gini(&[0.0, 0.0, 0.0, 1.0]).unwrap(), 0.75);
        assert_eq!(gini(&[7.0]).unwrap(), 0.0);
    }

    #[test]
    fn gini_matches_double_sum_and_is_scale_invariant() {
        let values = [0.3, 1.9, 0.0, 4.2, 0.7, 2.2, 0.1];
        let g = gini(&values).unwrap();
        assert!((g - gini_brute_force(&values)).abs() < 1e-12);
        let scaled: Vec<f64> = values.iter().map(|v| v * 37.5).collect();
        assert!((gini(&scaled).unwrap() - g).abs() < 1e-12);
        assert!((0.0..1.0).contains(&g));
    }

    #[test]
    fn gini_one_hot_attains_upper_bound() {
        let mut values = vec![0.0; 10];
        values[3] = 2.5;
        assert_eq!(gini(&values).unwrap(), 0.9);
    }

    #[test]
    fn gini_rejects_bad_input() {
        assert_eq!(
            gini(&[0.0, 0.0]).unwrap_err().to_string(),
            "degenerate distribution"
        );
        assert!(gini(&[-1.0, 2.0]).is_err());
        assert!(gini(&[]).is_err());
        assert!(gini(&[f64::NAN]).is_err());
    }

    #[test]
    fn normalized_norms_divide_by_sqrt_dim() {
        let spec = BlockSpec::new([("a", 1), ("b", 4)]).unwrap();
        let g = BlockedVector::new(spec, vec![1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let out = normalized_block_grad_norms(&g).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-12);
        assert!((out[1] - 0.5).abs() < 1e-12);
        let total: f64 = out.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_norms_single_block_and_zero_gradient() {
        let spec = BlockSpec::single(3).unwrap();
        let g = BlockedVector::new(spec.clone(), vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(normalized_block_grad_norms(&g).unwrap(), vec![1.0]);
        let zero = BlockedVector::zeros(spec);
        assert_eq!(
            normalized_block_grad_norms(&zero).unwrap_err().to_string(),
            "zero gradient"
        );
    }

    #[test]
    fn layer_ratio_examples() {
        assert_eq!(
            layer_ratio(&[1.0, 1.0, 2.0]).unwrap(),
            vec![0.25, 0.25, 0.5]
        );
        assert_eq!(layer_ratio(&[5.0]).unwrap(), vec![1.0]);
        let forward = layer_ratio(&[3.0, 1.0, 2.0]).unwrap();
        let permuted = layer_ratio(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(forward[0], permuted[2]);
        assert_eq!(forward[1], permuted[0]);
        assert!(layer_ratio(&[0.0, 0.0]).is_err());
        assert!(layer_ratio(&[-1.0, 1.0]).is_err());
    }

    #[test]
    fn deterministic_complexity_scans_from_start() {
        let norms = [10.0, 3.0, 0.5, 0.1];
        let m = iteration_complexity_from_norms(&norms, 4, 0.3, 2).unwrap();
        assert_eq!(m.threshold, 0.6);
        assert_eq!(m.outcome, ComplexityOutcome::Reached(2));

        let immediate = iteration_complexity_from_norms(&norms, 4, 6.0, 2).unwrap();
        assert_eq!(immediate.outcome, ComplexityOutcome::Reached(0));

        let never = iteration_complexity_from_norms(&norms, 4, 0.01, 2).unwrap();
        assert_eq!(never.outcome, ComplexityOutcome::NotReached { budget: 4 });

        let l1 = iteration_complexity_from_norms(&norms, 4, 0.2, 1).unwrap();
        assert_eq!(l1.threshold, 0.8);
        assert_eq!(l1.outcome, ComplexityOutcome::Reached(2));
    }

    #[test]
    fn complexity_is_monotone_in_epsilon() {
        let norms = [9.0, 7.0, 5.0, 3.0, 1.0, 0.2];
        let mut last = usize::MAX;
        for eps in [0.05, 0.2, 1.0, 2.0, 5.0] {
            let m = iteration_complexity_from_norms(&norms, 1, eps, 2).unwrap();
            let t = match m.outcome {
                ComplexityOutcome::Reached(t) => t,
                ComplexityOutcome::NotReached { budget } => budget,
            };
            assert!(t <= last);
            last = t;
        }
    }

    #[test]
    fn complexity_rejects_bad_arguments() {
        assert!(iteration_complexity_from_norms(&[1.0], 4, 0.0, 2).is_err());
        assert!(iteration_complexity_from_norms(&[1.0], 4, 0.1, 3).is_err());
        assert!(iteration_complexity_from_norms(&[1.0], 0, 0.1, 2).is_err());
    }

    fn record_from_norms(norms: &[f64]) -> TrajectoryRecord {
        use crate::optim::StepLog;
        TrajectoryRecord {
            block_names: vec!["all".to_string()],
            steps: norms
                .iter()
                .enumerate()
                .map(|(t, &n)| StepLog {
                    step: t,
                    loss: n,
                    grad_l1: n,
                    grad_l2: n,
                    grad_linf: n,
                    block_l2: vec![n],
                    lr: 0.1,
                })
                .collect(),
            final_point: None,
            final_theta: None,
            diverged: true,
            steps_requested: norms.len(),
        }
    }

    #[test]
    fn stochastic_complexity_with_identical_runs_matches_deterministic() {
        let norms = [10.0, 3.0, 0.5, 0.1];
        let runs: Vec<TrajectoryRecord> = (0..5).map(|_| record_from_norms(&norms)).collect();
        let st = stochastic_iteration_complexity(&runs, 4, 0.3, 2).unwrap();
        assert_eq!(st.outcome, ComplexityOutcome::Reached(2));
        assert_eq!(st.mode, ComplexityMode::Stochastic { runs: 5 });
    }

    #[test]
    fn stochastic_complexity_uses_median_style_rule() {
        let runs = vec![
            record_from_norms(&[10.0, 0.1, 0.1, 0.1, 0.1, 0.1]),
            record_from_norms(&[10.0, 10.0, 10.0, 0.1, 0.1, 0.1]),
            record_from_norms(&[10.0, 10.0, 10.0, 10.0, 10.0, 0.1]),
        ];
        let st = stochastic_iteration_complexity(&runs, 1, 1.0, 2).unwrap();
        assert_eq!(st.outcome, ComplexityOutcome::Reached(3));

        let none = vec![
            record_from_norms(&[10.0, 10.0]),
            record_from_norms(&[10.0, 0.1]),
            record_from_norms(&[10.0, 10.0]),
        ];
        let st = stochastic_iteration_complexity(&none, 1, 1.0, 2).unwrap();
        assert_eq!(st.outcome, ComplexityOutcome::NotReached { budget: 2 });
    }

    #[test]
    fn full_batch_noise_is_exactly_zero() {
        let obj = SoftmaxLinearObjective::new(16, 3, 4, 11).unwrap();
        let theta =
            BlockedVector::new(obj.block_spec().clone(), vec![0.05; obj.block_spec().total_dim()])
                .unwrap();
        let est = noise_constants(
            &obj,
            &theta,
            &NoiseOptions {
                batch_size: 16,
                draws: 4,
                seed: 5,
            },
        )
        .unwrap();
        assert_eq!(est.sigma2, 0.0);
        assert_eq!(est.sigma3, 0.0);
        assert_eq!(est.draws, 4);
    }

    #[test]
    fn repeated_batch_equals_single_draw_ratio() {
        let obj = SoftmaxLinearObjective::new(12, 3, 4, 2).unwrap();
        let theta =
            BlockedVector::new(obj.block_spec().clone(), vec![0.1; obj.block_spec().total_dim()])
                .unwrap();
        let batch: Vec<usize> = vec![0, 2, 5, 7, 9, 11];
        let twice = noise_constants_from_batches(&obj, &theta, &[batch.clone(), batch.clone()])
            .unwrap();
        let thrice =
            noise_constants_from_batches(&obj, &theta, &[batch.clone(), batch.clone(), batch])
                .unwrap();
        assert!((twice.sigma2 - thrice.sigma2).abs() < 1e-15);
        assert!((twice.sigma3 - thrice.sigma3).abs() < 1e-15);
        assert!(twice.sigma3 > 0.0);
    }

    #[test]
    fn half_batch_noise_is_reproducible() {
        let obj = SoftmaxLinearObjective::new(16, 3, 4, 11).unwrap();
        let theta =
            BlockedVector::new(obj.block_spec().clone(), vec![0.05; obj.block_spec().total_dim()])
                .unwrap();
        let opts = NoiseOptions {
            batch_size: 8,
            draws: 10,
            seed: 21,
        };
        let a = noise_constants(&obj, &theta, &opts).unwrap();
        let b = noise_constants(&obj, &theta, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.sigma2.is_finite() && a.sigma2 > 0.0);
        assert!(a.sigma3.is_finite() && a.sigma3 > 0.0);
    }

    #[test]
    fn noise_estimation_rejects_degenerate_setups() {
        let obj = SoftmaxLinearObjective::new(8, 2, 3, 1).unwrap();
        let theta = BlockedVector::zeros(obj.block_spec().clone());
        let err = noise_constants(
            &obj,
            &theta,
            &NoiseOptions {
                batch_size: 4,
                draws: 1,
                seed: 0,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("at least 2 draws"));

        // Symmetric two-sample problem whose full gradient vanishes at zero.
        let sym =
            SoftmaxLinearObjective::from_parts(vec![1.0, 1.0], vec![0, 1], 2, 1).unwrap();
        let zero = BlockedVector::zeros(sym.block_spec().clone());
        let err = noise_constants(
            &sym,
            &zero,
            &NoiseOptions {
                batch_size: 1,
                draws: 4,
                seed: 0,
            },
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "zero gradient");
    }

    #[test]
    fn grad_hessian_pairs_near_minimum_correlate() {
        let obj = build_quadratic(QuadraticSetting::Hetero, 31).unwrap();
        let spec = obj.block_spec().clone();
        // theta - theta* aligned with each block's top eigenvector.
        let mut theta = BlockedVector::zeros(spec.clone());
        for b in 0..spec.num_blocks() {
            let evals = obj.eigenvalues(b);
            let top = evals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            let q = obj.q_factor(b);
            let range = spec.range(b);
            for (row, slot) in theta.as_mut_slice()[range].iter_mut().enumerate() {
                *slot = 1e-3 * q[(row, top)];
            }
        }
        let pairs = grad_hessian_pairs(&obj, &theta, &obj.block_max_eigenvalues()).unwrap();
        assert_eq!(pairs.points.len(), 3);
        let corr = pairs.log_correlation.unwrap();
        assert!(corr > 0.9, "correlation {corr}");
    }

    #[test]
    fn grad_hessian_pairs_single_block_has_no_correlation() {
        let obj = build_quadratic(
            QuadraticSetting::Custom(vec![vec![1.0, 2.0, 3.0]]),
            1,
        )
        .unwrap();
        let theta =
            BlockedVector::new(obj.block_spec().clone(), vec![1.0, 1.0, 1.0]).unwrap();
        let pairs = grad_hessian_pairs(&obj, &theta, &obj.block_max_eigenvalues()).unwrap();
        assert_eq!(pairs.points.len(), 1);
        assert_eq!(pairs.log_correlation, None);
    }

    #[test]
    fn heterogeneity_report_on_quadratic() {
        let obj = build_quadratic(QuadraticSetting::Hetero, 3).unwrap();
        let theta =
            BlockedVector::new(obj.block_spec().clone(), vec![1.0; 9]).unwrap();
        let report = heterogeneity_report(&obj, &theta, &HeterogeneityOptions::default()).unwrap();
        let nsum: f64 = report.normalized_block_norms.iter().sum();
        let lsum: f64 = report.layer_ratios.iter().sum();
        assert!((nsum - 1.0).abs() < 1e-12);
        assert!((lsum - 1.0).abs() < 1e-12);
        assert!(report.gini >= 0.0 && report.gini < 1.0);
        assert!((report.lambda_p - 5104.0 / 3.0).abs() < 1e-9);
        assert!(report.lambda_g >= 3.0 && report.lambda_g <= 5000.0);
        assert!(report.delta_d <= 1e-9);
        assert!(report.rho_h <= 1e-9);
        assert_eq!(report.sigma2, None);
    }
}
