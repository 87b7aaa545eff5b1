//! Iterates a step rule over an objective, logging per-step losses, gradient
//! norms, per-block norms, and the learning rate used.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::block::{block_norms, vector_norm, BlockedVector, Norm};
use crate::error::Error;
use crate::objectives::Objective;
use crate::optim::schedule::{schedule_lr, ScheduleSpec};
use crate::optim::steps::{
    adam_step, clip_gradient, gd_step, momentum_update, rmsprop_step, sign_step, Hyperparams,
    OptimizerState,
};
use crate::rng;

/// Loss magnitude beyond which a run is declared divergent.
const DIVERGENCE_LOSS: f64 = 1e12;

/// Which update rule drives the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    Gd,
    Sign,
    /// Sign of the first moment; β and the momentum form come from
    /// [`Hyperparams`].
    SignMomentum,
    Adam,
    RmsProp,
}

/// Minibatch settings for stochastic runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StochasticOptions {
    pub batch_size: usize,
    pub seed: u64,
}

/// Run length and step-rule configuration.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub steps: usize,
    pub stochastic: Option<StochasticOptions>,
    pub hyper: Hyperparams,
}

impl RunOptions {
    pub fn deterministic(steps: usize) -> Self {
        Self {
            steps,
            stochastic: None,
            hyper: Hyperparams::default(),
        }
    }
}

/// One logged step: statistics of the visited point and the rate applied
/// there. Gradient norms are always full-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub grad_l1: f64,
    pub grad_l2: f64,
    pub grad_linf: f64,
    pub block_l2: Vec<f64>,
    pub lr: f64,
}

/// Statistics of the last point reached, where no further step was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalPoint {
    pub loss: f64,
    pub grad_l1: f64,
    pub grad_l2: f64,
    pub grad_linf: f64,
    pub block_l2: Vec<f64>,
}

/// Full log of one optimization run.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub block_names: Vec<String>,
    pub steps: Vec<StepLog>,
    /// None exactly when the run diverged.
    pub final_point: Option<FinalPoint>,
    pub final_theta: Option<BlockedVector>,
    pub diverged: bool,
    pub steps_requested: usize,
}

impl TrajectoryRecord {
    /// Gradient norms at every visited point (steps, then the final point).
    pub fn point_grad_norms(&self, q: Norm) -> Vec<f64> {
        let pick_step = |s: &StepLog| match q {
            Norm::L1 => s.grad_l1,
            Norm::L2 => s.grad_l2,
            Norm::Linf => s.grad_linf,
        };
        let mut norms: Vec<f64> = self.steps.iter().map(pick_step).collect();
        if let Some(f) = &self.final_point {
            norms.push(match q {
                Norm::L1 => f.grad_l1,
                Norm::L2 => f.grad_l2,
                Norm::Linf => f.grad_linf,
            });
        }
        norms
    }

    /// Losses at every visited point.
    pub fn point_losses(&self) -> Vec<f64> {
        let mut losses: Vec<f64> = self.steps.iter().map(|s| s.loss).collect();
        if let Some(f) = &self.final_point {
            losses.push(f.loss);
        }
        losses
    }
}

struct PointStats {
    loss: f64,
    grad: BlockedVector,
    l1: f64,
    l2: f64,
    linf: f64,
    block_l2: Vec<f64>,
}

enum Probe {
    Ok(PointStats),
    Diverged,
}

fn probe(objective: &dyn Objective, theta: &BlockedVector) -> Result<Probe, Error> {
    let loss = match objective.loss(theta) {
        Ok(l) => l,
        Err(Error::NonFiniteInput) => return Ok(Probe::Diverged),
        Err(e) => return Err(e),
    };
    if !loss.is_finite() || loss > DIVERGENCE_LOSS {
        return Ok(Probe::Diverged);
    }
    let grad = match objective.gradient(theta) {
        Ok(g) => g,
        Err(Error::NonFiniteInput) => return Ok(Probe::Diverged),
        Err(e) => return Err(e),
    };
    let l1 = match vector_norm(&grad, Norm::L1) {
        Ok(n) => n,
        Err(Error::NonFiniteInput) => return Ok(Probe::Diverged),
        Err(e) => return Err(e),
    };
    let l2 = vector_norm(&grad, Norm::L2)?;
    let linf = vector_norm(&grad, Norm::Linf)?;
    let block_l2 = block_norms(&grad, Norm::L2)?
        .into_iter()
        .map(|(_, n)| n)
        .collect();
    Ok(Probe::Ok(PointStats {
        loss,
        grad,
        l1,
        l2,
        linf,
        block_l2,
    }))
}

/// Epoch-shuffled minibatch index stream; each chunk is sorted so subset
/// gradient accumulation order is canonical.
struct MinibatchStream {
    seed: u64,
    n: usize,
    batch_size: usize,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl MinibatchStream {
    fn new(seed: u64, n: usize, batch_size: usize) -> Self {
        let mut rng = rng::stream(seed, "minibatch.shuffle", 0);
        Self {
            seed,
            n,
            batch_size,
            epoch: 0,
            order: rng::shuffled_indices(&mut rng, n),
            pos: 0,
        }
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.pos >= self.n {
            self.epoch += 1;
            let mut rng = rng::stream(self.seed, "minibatch.shuffle", self.epoch);
            self.order = rng::shuffled_indices(&mut rng, self.n);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.n);
        let mut batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch.sort_unstable();
        batch
    }
}

/// Runs `opts.steps` updates of `rule` from `theta0`.
///
/// The learning rate is always computed from the full-batch gradient; in
/// stochastic mode the update itself uses the minibatch gradient. A loss
/// above 1e12 or any non-finite value truncates the trajectory with the
/// divergence flag set; an exactly zero gradient ends the run early at the
/// stationary point.
pub fn run_sequence(
    objective: &dyn Objective,
    rule: StepRule,
    schedule: &ScheduleSpec,
    theta0: &BlockedVector,
    opts: &RunOptions,
) -> Result<TrajectoryRecord, Error> {
    if opts.steps == 0 {
        return Err(Error::invalid("T ≥ 1"));
    }
    schedule.validate()?;
    let spec = objective.block_spec().clone();
    if theta0.len() != spec.total_dim() {
        return Err(Error::ShapeMismatch {
            expected: spec.total_dim(),
            got: theta0.len(),
        });
    }
    let p = spec.total_dim();
    let block_names: Vec<String> = spec.iter().map(|(n, _)| n.to_string()).collect();

    let mut batches = match &opts.stochastic {
        Some(s) => {
            let sampled = objective.as_sampled().ok_or(Error::NotSampled)?;
            let n = sampled.num_samples();
            if s.batch_size == 0 || s.batch_size > n {
                return Err(Error::invalid(alloc::format!(
                    "batch size {} out of range 1..={n}",
                    s.batch_size
                )));
            }
            Some(MinibatchStream::new(s.seed, n, s.batch_size))
        }
        None => None,
    };

    let mut state = OptimizerState::new(spec.clone(), opts.hyper);
    let mut theta = theta0.clone();
    let mut record = TrajectoryRecord {
        block_names,
        steps: Vec::with_capacity(opts.steps.min(1 << 20)),
        final_point: None,
        final_theta: None,
        diverged: false,
        steps_requested: opts.steps,
    };

    let finish = |record: &mut TrajectoryRecord, stats: PointStats, theta: BlockedVector| {
        record.final_point = Some(FinalPoint {
            loss: stats.loss,
            grad_l1: stats.l1,
            grad_l2: stats.l2,
            grad_linf: stats.linf,
            block_l2: stats.block_l2,
        });
        record.final_theta = Some(theta);
    };

    for t in 0..opts.steps {
        let stats = match probe(objective, &theta)? {
            Probe::Ok(s) => s,
            Probe::Diverged => {
                record.diverged = true;
                return Ok(record);
            }
        };

        if stats.linf == 0.0 {
            finish(&mut record, stats, theta);
            return Ok(record);
        }

        let step_spec;
        let effective = if schedule.zeta_end.is_some() {
            step_spec = ScheduleSpec {
                zeta: schedule.zeta_at(t, opts.steps),
                zeta_end: None,
                ..schedule.clone()
            };
            &step_spec
        } else {
            schedule
        };
        let eta = schedule_lr(effective, &stats.grad, p)?;
        if !(eta > 0.0) {
            finish(&mut record, stats, theta);
            return Ok(record);
        }

        let mut g_step = match &mut batches {
            Some(stream) => {
                let batch = stream.next_batch();
                let sampled = objective.as_sampled().ok_or(Error::NotSampled)?;
                sampled.gradient_subset(&theta, &batch)?
            }
            None => stats.grad.clone(),
        };
        if let Some(threshold) = opts.hyper.clip_threshold {
            g_step = clip_gradient(&g_step, threshold)?;
        }

        record.steps.push(StepLog {
            step: t,
            loss: stats.loss,
            grad_l1: stats.l1,
            grad_l2: stats.l2,
            grad_linf: stats.linf,
            block_l2: stats.block_l2,
            lr: eta,
        });

        theta = match rule {
            StepRule::Gd => gd_step(&theta, &g_step, eta)?,
            StepRule::Sign => sign_step(&theta, &g_step, eta)?,
            StepRule::SignMomentum => {
                let m = momentum_update(&mut state, &g_step, opts.hyper.momentum_beta)?;
                sign_step(&theta, &m, eta)?
            }
            StepRule::Adam => adam_step(&mut state, &theta, &g_step, eta)?,
            StepRule::RmsProp => rmsprop_step(&mut state, &theta, &g_step, eta)?,
        };
    }

    match probe(objective, &theta)? {
        Probe::Ok(stats) => finish(&mut record, stats, theta),
        Probe::Diverged => record.diverged = true,
    }
    Ok(record)
}
