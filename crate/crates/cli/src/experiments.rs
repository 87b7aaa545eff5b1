//! Experiment drivers. One seed produces one [`Summary`] (plus a trajectory
//! for step-based experiments); [`run_config_file`] fans the config's seeds
//! out over worker threads and writes all artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use hetero_opt_core::metrics::{
    self, iteration_complexity_from_norms, noise_constants, stochastic_iteration_complexity,
    ComplexityMeasurement, ComplexityMode, ComplexityOutcome, HeterogeneityOptions, NoiseOptions,
};
use hetero_opt_core::optim::{
    linear_head_closed_forms, linear_head_epoch_updates, run_sequence, EpochMode, RunOptions,
    StochasticOptions, TrajectoryRecord,
};
use hetero_opt_core::rng;
use hetero_opt_core::spectral::{
    block_spectral_report, lambda_g_trajectory, lambda_p, PowerIterOptions,
};
use hetero_opt_core::transformer::{
    attention_bounds, block_diagonal, layer_norm_forward, layer_norm_jacobian,
    onehot_extremality_check, rms_norm_forward, rms_norm_jacobian, AttentionConfig, TokenMatrix,
};
use hetero_opt_core::{BlockedVector, Norm, Objective};
use nalgebra::DMatrix;

use crate::artifacts::{
    write_json, write_trajectory_csv, AttentionSection, ComplexityRow, JacobianRow,
    JacobianSection, LinearHeadSection, Manifest, NoiseRow, Summary,
};
use crate::config::{Experiment, RunConfig};
use crate::error::CliError;
use crate::fd;

pub struct SeedOutput {
    pub seed: u64,
    pub summary: Summary,
    pub trajectory: Option<TrajectoryRecord>,
}

/// Per-block Hessian operator norms at `theta`: exact when the objective
/// knows them, power iteration otherwise.
fn block_operator_norms(
    obj: &dyn Objective,
    theta: &BlockedVector,
    power: &PowerIterOptions,
) -> Result<Vec<f64>, CliError> {
    if let Some(exact) = obj.exact_block_operator_norms(theta) {
        return Ok(exact);
    }
    Ok(block_spectral_report(obj, theta, power)?.lambda_b)
}

fn power_options(config: &RunConfig, seed: u64) -> PowerIterOptions {
    config
        .power_iteration
        .map(|p| p.build(seed))
        .unwrap_or_else(|| PowerIterOptions::thorough(seed))
}

/// Gini of the normalized per-block gradient norms at the start point.
/// None when the gradient vanishes there.
fn start_gini(obj: &dyn Objective, theta0: &BlockedVector) -> Option<f64> {
    let g = obj.gradient(theta0).ok()?;
    let norms = metrics::normalized_block_grad_norms(&g).ok()?;
    metrics::gini(&norms).ok()
}

fn complexity_row(m: &ComplexityMeasurement, budget: usize) -> ComplexityRow {
    let mode = match m.mode {
        ComplexityMode::Deterministic => "deterministic".to_string(),
        ComplexityMode::Stochastic { runs } => format!("stochastic:{runs}"),
    };
    let (reached, t, budget) = match m.outcome {
        ComplexityOutcome::Reached(t) => (true, Some(t), budget),
        ComplexityOutcome::NotReached { budget } => (false, None, budget),
    };
    ComplexityRow {
        epsilon: m.epsilon,
        q: m.q,
        threshold: m.threshold,
        mode,
        reached,
        t,
        budget,
    }
}

fn norm_for_q(q: u32) -> Norm {
    if q == 1 {
        Norm::L1
    } else {
        Norm::L2
    }
}

fn trajectory_experiment(config: &RunConfig, seed: u64) -> Result<SeedOutput, CliError> {
    let objective_config = config.objective()?;
    let built = objective_config.build()?;
    let obj = built.as_dyn();
    let optimizer = config.optimizer()?;
    let schedule = optimizer.schedule.build()?;
    let steps = config.steps.expect("validated");
    let theta0 = config.theta0().build(obj.block_spec(), seed);

    let opts = RunOptions {
        steps,
        stochastic: optimizer
            .batch_size
            .map(|batch_size| StochasticOptions { batch_size, seed }),
        hyper: optimizer.hyper.map(|h| h.build()).unwrap_or_default(),
    };
    let record = run_sequence(obj, optimizer.rule.to_rule(), &schedule, &theta0, &opts)?;

    let lambda_b = block_operator_norms(obj, &theta0, &power_options(config, seed))?;

    let mut summary = Summary::new(config.experiment.name());
    summary.objective = Some(objective_config.describe());
    summary.seed = Some(seed);
    summary.steps = Some(record.steps.len());
    summary.diverged = Some(record.diverged);
    summary.lambda_p = Some(lambda_p(obj.block_spec(), &lambda_b)?);
    summary.lambda_g_sup = lambda_g_trajectory(&record, |_| Ok(lambda_b.clone())).ok();
    summary.gini = start_gini(obj, &theta0);
    if let Some(f) = &record.final_point {
        summary.final_loss = Some(f.loss);
        summary.final_grad_l2 = Some(f.grad_l2);
    }
    if let (Some(epsilons), Some(q)) = (&config.epsilons, config.q) {
        let norms = record.point_grad_norms(norm_for_q(q));
        let p = obj.block_spec().total_dim();
        let mut rows = Vec::with_capacity(epsilons.len());
        for &eps in epsilons {
            let m = iteration_complexity_from_norms(&norms, p, eps, q)?;
            rows.push(complexity_row(&m, norms.len()));
        }
        summary.t_eps = Some(rows);
    }

    Ok(SeedOutput {
        seed,
        summary,
        trajectory: Some(record),
    })
}

fn heterogeneity_experiment(config: &RunConfig, seed: u64) -> Result<SeedOutput, CliError> {
    let objective_config = config.objective()?;
    let built = objective_config.build()?;
    let obj = built.as_dyn();
    let theta0 = config.theta0().build(obj.block_spec(), seed);

    let mut opts = HeterogeneityOptions {
        power_iter: power_options(config, seed),
        ..HeterogeneityOptions::default()
    };
    if let Some(pairs) = config.rho_pairs {
        opts.rho_pairs = pairs;
    }
    if let Some(w) = config.rho_half_width {
        opts.rho_half_width = w;
    }
    if let Some(noise) = &config.noise {
        // The heterogeneity report carries a single noise estimate; the
        // first configured batch size is the one reported.
        opts.noise = Some(NoiseOptions {
            batch_size: noise.batch_sizes[0],
            draws: noise.draws,
            seed,
        });
    }
    let report = metrics::heterogeneity_report(obj, &theta0, &opts)?;

    let mut summary = Summary::new(config.experiment.name());
    summary.objective = Some(objective_config.describe());
    summary.seed = Some(seed);
    summary.gini = Some(report.gini);
    summary.normalized_block_norms = Some(report.normalized_block_norms);
    summary.layer_ratios = Some(report.layer_ratios);
    summary.lambda_g = Some(report.lambda_g);
    summary.lambda_p = Some(report.lambda_p);
    summary.delta_d = Some(report.delta_d);
    summary.rho_h = Some(report.rho_h);
    summary.sigma2 = report.sigma2;
    summary.sigma3 = report.sigma3;

    Ok(SeedOutput {
        seed,
        summary,
        trajectory: None,
    })
}

fn noise_experiment(config: &RunConfig, seed: u64) -> Result<SeedOutput, CliError> {
    let objective_config = config.objective()?;
    let obj = objective_config.build_softmax()?;
    let theta0 = config.theta0().build(obj.block_spec(), seed);
    let noise = config.noise.as_ref().expect("validated");

    let mut rows = Vec::with_capacity(noise.batch_sizes.len());
    for &batch_size in &noise.batch_sizes {
        let est = noise_constants(
            &obj,
            &theta0,
            &NoiseOptions {
                batch_size,
                draws: noise.draws,
                seed,
            },
        )?;
        rows.push(NoiseRow {
            batch_size,
            sigma2: est.sigma2,
            sigma3: est.sigma3,
            excluded_coordinates: est.excluded_coordinates,
            draws: est.draws,
        });
    }

    let mut summary = Summary::new(config.experiment.name());
    summary.objective = Some(objective_config.describe());
    summary.seed = Some(seed);
    summary.noise = Some(rows);

    Ok(SeedOutput {
        seed,
        summary,
        trajectory: None,
    })
}

fn jacobian_experiment(config: &RunConfig, seed: u64) -> Result<SeedOutput, CliError> {
    let jac = config.jacobian.clone().unwrap_or_default();
    let mut rows = Vec::with_capacity(jac.shapes.len());
    let mut worst = 0.0f64;
    for (k, &(n, d)) in jac.shapes.iter().enumerate() {
        let mut stream = rng::stream(seed, "jacobian_check.x", k as u64);
        let x = DMatrix::from_row_slice(n, d, &rng::standard_normal_vec(&mut stream, n * d));
        let gamma: Vec<f64> = rng::standard_normal_vec(&mut stream, d)
            .into_iter()
            .map(|v| 0.5 + v.abs())
            .collect();
        let tokens = TokenMatrix::new(x.clone())?;

        let layer_norm_rel_err = if d >= 2 {
            let analytic = block_diagonal(&layer_norm_jacobian(&tokens)?);
            let estimate = fd::jacobian(
                |m| {
                    layer_norm_forward(&TokenMatrix::new(m.clone()).expect("finite perturbation"))
                        .expect("gaussian rows are nonconstant")
                },
                &x,
            );
            Some(fd::relative_error(&analytic, &estimate))
        } else {
            None
        };

        let analytic = block_diagonal(&rms_norm_jacobian(&tokens, &gamma)?);
        let estimate = fd::jacobian(
            |m| {
                rms_norm_forward(&TokenMatrix::new(m.clone()).expect("finite perturbation"), &gamma)
                    .expect("gaussian rows are nonzero")
            },
            &x,
        );
        let rms_norm_rel_err = fd::relative_error(&analytic, &estimate);

        worst = worst
            .max(rms_norm_rel_err)
            .max(layer_norm_rel_err.unwrap_or(0.0));
        rows.push(JacobianRow {
            n,
            d,
            layer_norm_rel_err,
            rms_norm_rel_err,
        });
    }

    let mut summary = Summary::new(config.experiment.name());
    summary.seed = Some(seed);
    summary.jacobian = Some(JacobianSection {
        tolerance: jac.tolerance,
        worst_rel_err: worst,
        pass: worst <= jac.tolerance,
        shapes: rows,
    });

    Ok(SeedOutput {
        seed,
        summary,
        trajectory: None,
    })
}

fn attention_experiment(config: &RunConfig, seed: u64) -> Result<SeedOutput, CliError> {
    let att = config.attention.expect("validated");
    let report = onehot_extremality_check(att.n, att.trials, seed)?;

    // Exactness probe at the one-hot extreme itself.
    let mut stream = rng::stream(seed, "attention.onehot", 0);
    let d = 3;
    let x = TokenMatrix::from_rows(att.n, d, &rng::standard_normal_vec(&mut stream, att.n * d))?;
    let attention = AttentionConfig::new(
        DMatrix::from_row_slice(d, 2, &rng::standard_normal_vec(&mut stream, d * 2)),
        DMatrix::from_row_slice(d, 2, &rng::standard_normal_vec(&mut stream, d * 2)),
        DMatrix::from_row_slice(d, 2, &rng::standard_normal_vec(&mut stream, d * 2)),
    )?;
    let onehot = DMatrix::<f64>::identity(att.n, att.n);
    let bounds = attention_bounds(&x, &attention, &onehot)?;

    let mut summary = Summary::new(config.experiment.name());
    summary.seed = Some(seed);
    summary.attention = Some(AttentionSection {
        n: report.n,
        trials: report.trials,
        violations: report.violations,
        max_frobenius_excess: report.max_frobenius_excess,
        min_query_term: report.min_query_term,
        filtered_out: report.filtered_out,
        onehot_u_q: bounds.u_q,
        onehot_p_frobenius: bounds.p_frobenius,
    });

    Ok(SeedOutput {
        seed,
        summary,
        trajectory: None,
    })
}

fn linear_head_experiment(config: &RunConfig, seed: u64) -> Result<SeedOutput, CliError> {
    let objective_config = config.objective()?;
    let obj = objective_config.build_softmax()?;
    let lh = config.linear_head.expect("validated");
    let theta0 = config.theta0().build(obj.block_spec(), seed);

    let frozen = linear_head_epoch_updates(&obj, &theta0, lh.eta, EpochMode::SampleWiseFrozen)?;
    let full = linear_head_epoch_updates(&obj, &theta0, lh.eta, EpochMode::FullBatch)?;
    let sequential =
        linear_head_epoch_updates(&obj, &theta0, lh.eta, EpochMode::SampleWiseSequential)?;
    let closed = linear_head_closed_forms(&obj, lh.eta);

    let max_diff = frozen
        .delta_v
        .iter()
        .chain(&frozen.delta_b)
        .zip(closed.delta_v.iter().chain(&closed.delta_b))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut summary = Summary::new(config.experiment.name());
    summary.objective = Some(objective_config.describe());
    summary.seed = Some(seed);
    summary.linear_head = Some(LinearHeadSection {
        eta: lh.eta,
        frozen_delta_b: frozen.delta_b,
        full_batch_delta_b: full.delta_b,
        sequential_delta_b: sequential.delta_b,
        closed_form_delta_b: closed.delta_b,
        max_abs_diff_frozen_vs_closed: max_diff,
    });

    Ok(SeedOutput {
        seed,
        summary,
        trajectory: None,
    })
}

pub fn execute_seed(config: &RunConfig, seed: u64) -> Result<SeedOutput, CliError> {
    match config.experiment {
        Experiment::Quadratic | Experiment::Complexity => trajectory_experiment(config, seed),
        Experiment::Heterogeneity => heterogeneity_experiment(config, seed),
        Experiment::Noise => noise_experiment(config, seed),
        Experiment::JacobianCheck => jacobian_experiment(config, seed),
        Experiment::Attention => attention_experiment(config, seed),
        Experiment::LinearHead => linear_head_experiment(config, seed),
    }
}

fn thread_cap(n_seeds: usize) -> Result<usize, CliError> {
    let cap = match std::env::var("HETERO_OPT_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::runtime("HETERO_OPT_THREADS must be a positive integer"))?,
        Err(_) => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    };
    Ok(cap.min(n_seeds).max(1))
}

/// Runs every seed, at most `HETERO_OPT_THREADS` at a time. Results come
/// back in seed order regardless of scheduling.
fn run_seeds(config: &RunConfig) -> Result<Vec<SeedOutput>, CliError> {
    let cap = thread_cap(config.seeds.len())?;
    if cap == 1 {
        return config
            .seeds
            .iter()
            .map(|&seed| execute_seed(config, seed))
            .collect();
    }
    let mut outputs = Vec::with_capacity(config.seeds.len());
    for chunk in config.seeds.chunks(cap) {
        let chunk_results: Vec<Result<SeedOutput, CliError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| scope.spawn(move || execute_seed(config, seed)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(CliError::runtime("worker thread panicked")))
                })
                .collect()
        });
        for result in chunk_results {
            outputs.push(result?);
        }
    }
    Ok(outputs)
}

fn prepare_run_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .next()
            .is_some();
        if occupied {
            if !force {
                return Err(CliError::runtime(format!(
                    "{} already contains a run; pass --force to replace it",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn default_out_dir(config_path: &Path) -> PathBuf {
    let stem = config_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("run");
    PathBuf::from("runs").join(stem)
}

/// Executes the config at `config_path` and writes all artifacts. Returns
/// the run directory. Single-seed configs write artifacts at the directory
/// root; multi-seed configs write one `seed-<s>/` subdirectory per seed.
pub fn run_config_file(
    config_path: &Path,
    out_override: Option<PathBuf>,
    force: bool,
    verbose: bool,
) -> Result<PathBuf, CliError> {
    let bytes = fs::read(config_path)
        .map_err(|e| CliError::config(format!("{}: {e}", config_path.display())))?;
    let config = RunConfig::from_slice(&bytes)?;
    config.validate()?;

    let out_dir = out_override
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| default_out_dir(config_path));
    prepare_run_dir(&out_dir, force)?;

    let digest = Sha256::digest(&bytes);
    let config_sha256: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = Manifest {
        experiment: config.experiment.name().to_string(),
        config_sha256,
        seeds: config.seeds.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    let outputs = run_seeds(&config)?;
    let single = config.seeds.len() == 1;
    for output in &outputs {
        let dir = if single {
            out_dir.clone()
        } else {
            let d = out_dir.join(format!("seed-{}", output.seed));
            fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
            d
        };
        write_json(&dir.join("summary.json"), &output.summary)?;
        if let Some(record) = &output.trajectory {
            write_trajectory_csv(&dir.join("trajectory.csv"), record)?;
        }
        if verbose {
            println!("seed {}: artifacts in {}", output.seed, dir.display());
        }
    }

    // Multi-seed complexity runs additionally get the ensemble first-hit
    // measurement over all seeds, written at the run root.
    if config.experiment == Experiment::Complexity && !single {
        let objective_config = config.objective()?;
        let p = objective_config
            .build()?
            .as_dyn()
            .block_spec()
            .total_dim();
        let records: Vec<TrajectoryRecord> = outputs
            .into_iter()
            .filter_map(|o| o.trajectory)
            .collect();
        let epsilons = config.epsilons.as_ref().expect("validated");
        let q = config.q.expect("validated");
        let budget = records
            .iter()
            .map(|r| r.point_grad_norms(norm_for_q(q)).len())
            .min()
            .unwrap_or(0);
        let mut rows = Vec::with_capacity(epsilons.len());
        for &eps in epsilons {
            let m = stochastic_iteration_complexity(&records, p, eps, q)?;
            rows.push(complexity_row(&m, budget));
        }
        let mut ensemble = Summary::new(config.experiment.name());
        ensemble.objective = Some(objective_config.describe());
        ensemble.steps = config.steps;
        ensemble.t_eps = Some(rows);
        write_json(&out_dir.join("summary.json"), &ensemble)?;
        if verbose {
            println!("ensemble summary in {}", out_dir.display());
        }
    }

    Ok(out_dir)
}
