//! JSON experiment configuration. The config file is the single source of
//! experiment truth; command-line flags only pick the file, the output
//! directory, and verbosity.

use serde::Deserialize;

use hetero_opt_core::objectives::{
    build_quadratic, smooth_test_function, QuadraticObjective, QuadraticSetting,
    SampledObjective, SmoothTestFunction, SoftmaxLinearObjective,
};
use hetero_opt_core::optim::{Hyperparams, MomentumForm, ScheduleKind, ScheduleSpec, StepRule};
use hetero_opt_core::rng;
use hetero_opt_core::spectral::PowerIterOptions;
use hetero_opt_core::{BlockSpec, BlockedVector, Objective};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Quadratic,
    Heterogeneity,
    Noise,
    JacobianCheck,
    Attention,
    LinearHead,
    Complexity,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Quadratic => "quadratic",
            Experiment::Heterogeneity => "heterogeneity",
            Experiment::Noise => "noise",
            Experiment::JacobianCheck => "jacobian_check",
            Experiment::Attention => "attention",
            Experiment::LinearHead => "linear_head",
            Experiment::Complexity => "complexity",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    Quadratic {
        #[serde(default)]
        preset: Option<String>,
        #[serde(default)]
        eigenvalues: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        seed: u64,
    },
    Softmax {
        samples: usize,
        classes: usize,
        feature_dim: usize,
        seed: u64,
    },
    Smooth {
        name: String,
        dim: usize,
    },
}

/// A constructed objective together with the config-derived label written
/// into summaries and compared across runs.
pub enum BuiltObjective {
    Quadratic(QuadraticObjective),
    Softmax(SoftmaxLinearObjective),
    Smooth(SmoothTestFunction),
}

impl BuiltObjective {
    pub fn as_dyn(&self) -> &dyn Objective {
        match self {
            BuiltObjective::Quadratic(o) => o,
            BuiltObjective::Softmax(o) => o,
            BuiltObjective::Smooth(o) => o,
        }
    }
}

impl ObjectiveConfig {
    pub fn build(&self) -> Result<BuiltObjective, CliError> {
        match self {
            ObjectiveConfig::Quadratic {
                preset,
                eigenvalues,
                seed,
            } => {
                let setting = match (preset.as_deref(), eigenvalues) {
                    (Some("homo"), None) => QuadraticSetting::Homo,
                    (Some("hetero"), None) => QuadraticSetting::Hetero,
                    (Some(other), None) => {
                        return Err(CliError::config(format!(
                            "objective.preset: unknown preset `{other}` (expected `homo` or `hetero`)"
                        )))
                    }
                    (None, Some(lists)) => QuadraticSetting::Custom(lists.clone()),
                    (None, None) => {
                        return Err(CliError::config(
                            "objective: quadratic needs either `preset` or `eigenvalues`",
                        ))
                    }
                    (Some(_), Some(_)) => {
                        return Err(CliError::config(
                            "objective: `preset` and `eigenvalues` are mutually exclusive",
                        ))
                    }
                };
                build_quadratic(setting, *seed)
                    .map(BuiltObjective::Quadratic)
                    .map_err(|e| CliError::config(format!("objective: {e}")))
            }
            ObjectiveConfig::Softmax {
                samples,
                classes,
                feature_dim,
                seed,
            } => SoftmaxLinearObjective::new(*samples, *classes, *feature_dim, *seed)
                .map(BuiltObjective::Softmax)
                .map_err(|e| CliError::config(format!("objective: {e}"))),
            ObjectiveConfig::Smooth { name, dim } => smooth_test_function(name, *dim)
                .map(BuiltObjective::Smooth)
                .map_err(|e| CliError::config(format!("objective: {e}"))),
        }
    }

    pub fn build_softmax(&self) -> Result<SoftmaxLinearObjective, CliError> {
        match self.build()? {
            BuiltObjective::Softmax(o) => Ok(o),
            _ => Err(CliError::config(
                "objective: this experiment needs a sampled objective (`kind: softmax`)",
            )),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ObjectiveConfig::Quadratic {
                preset,
                eigenvalues,
                seed,
            } => match preset {
                Some(p) => format!("quadratic:{p}(seed {seed})"),
                None => format!(
                    "quadratic:custom[{} blocks](seed {seed})",
                    eigenvalues.as_ref().map_or(0, |e| e.len())
                ),
            },
            ObjectiveConfig::Softmax {
                samples,
                classes,
                feature_dim,
                seed,
            } => format!("softmax:n{samples}_c{classes}_h{feature_dim}(seed {seed})"),
            ObjectiveConfig::Smooth { name, dim } => format!("smooth:{name}_dim{dim}"),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Theta0Config {
    #[default]
    Ones,
    Zeros,
    Gaussian { scale: f64 },
}

impl Theta0Config {
    /// Start point for one seeded run. Gaussian draws come from the run
    /// seed so different seeds explore different starts.
    pub fn build(&self, spec: &BlockSpec, seed: u64) -> BlockedVector {
        let dim = spec.total_dim();
        let values = match self {
            Theta0Config::Ones => vec![1.0; dim],
            Theta0Config::Zeros => vec![0.0; dim],
            Theta0Config::Gaussian { scale } => {
                let mut stream = rng::stream(seed, "theta0.sphere", 0);
                rng::standard_normal_vec(&mut stream, dim)
                    .into_iter()
                    .map(|v| scale * v)
                    .collect()
            }
        };
        BlockedVector::new(spec.clone(), values).expect("dim matches spec")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Gd,
    Sign,
    SignMomentum,
    Adam,
    Rmsprop,
}

impl RuleName {
    pub fn to_rule(self) -> StepRule {
        match self {
            RuleName::Gd => StepRule::Gd,
            RuleName::Sign => StepRule::Sign,
            RuleName::SignMomentum => StepRule::SignMomentum,
            RuleName::Adam => StepRule::Adam,
            RuleName::Rmsprop => StepRule::RmsProp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKindName {
    Constant,
    TheoremGrad,
    TheoremSign,
    StochasticTheoremGrad,
    StochasticTheoremSign,
    NoiseAdaptedSign,
    QuadOptimalSign,
    QuadClassicalGd,
    L1Scaled,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKindName,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub lambda_g: Option<f64>,
    #[serde(default)]
    pub lambda_p: Option<f64>,
    #[serde(default)]
    pub rho_h: Option<f64>,
    #[serde(default)]
    pub sigma2: Option<f64>,
    #[serde(default)]
    pub sigma3: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub lambda_min: Option<f64>,
    #[serde(default)]
    pub lambda_max: Option<f64>,
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub zeta_end: Option<f64>,
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<ScheduleSpec, CliError> {
        let kind = match self.kind {
            ScheduleKindName::Constant => ScheduleKind::Constant,
            ScheduleKindName::TheoremGrad => ScheduleKind::TheoremGrad,
            ScheduleKindName::TheoremSign => ScheduleKind::TheoremSign,
            ScheduleKindName::StochasticTheoremGrad => ScheduleKind::StochasticTheoremGrad,
            ScheduleKindName::StochasticTheoremSign => ScheduleKind::StochasticTheoremSign,
            ScheduleKindName::NoiseAdaptedSign => ScheduleKind::NoiseAdaptedSign,
            ScheduleKindName::QuadOptimalSign => ScheduleKind::QuadOptimalSign,
            ScheduleKindName::QuadClassicalGd => ScheduleKind::QuadClassicalGd,
            ScheduleKindName::L1Scaled => ScheduleKind::L1Scaled,
        };
        let spec = ScheduleSpec {
            kind,
            zeta: self.zeta.unwrap_or(1.0),
            zeta_end: self.zeta_end,
            value: self.value,
            lambda_g: self.lambda_g,
            lambda_p: self.lambda_p,
            rho_h: self.rho_h,
            sigma2: self.sigma2,
            sigma3: self.sigma3,
            gamma: self.gamma,
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
        };
        spec.validate()
            .map_err(|e| CliError::config(format!("optimizer.schedule: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperConfig {
    #[serde(default)]
    pub beta1: Option<f64>,
    #[serde(default)]
    pub beta2: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_inside_sqrt: Option<bool>,
    #[serde(default)]
    pub momentum_beta: Option<f64>,
    #[serde(default)]
    pub heavy_ball: Option<bool>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub clip_threshold: Option<f64>,
}

impl HyperConfig {
    pub fn build(&self) -> Hyperparams {
        let mut h = Hyperparams::default();
        if let Some(v) = self.beta1 {
            h.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            h.beta2 = v;
        }
        if let Some(v) = self.eps {
            h.eps = v;
        }
        if let Some(v) = self.eps_inside_sqrt {
            h.eps_inside_sqrt = v;
        }
        if let Some(v) = self.momentum_beta {
            h.momentum_beta = v;
        }
        if let Some(true) = self.heavy_ball {
            h.momentum_form = MomentumForm::HeavyBall;
        }
        if let Some(v) = self.alpha {
            h.alpha = v;
        }
        if self.clip_threshold.is_some() {
            h.clip_threshold = self.clip_threshold;
        }
        h
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub rule: RuleName,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub hyper: Option<HyperConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerIterConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl PowerIterConfig {
    pub fn build(&self, seed: u64) -> PowerIterOptions {
        PowerIterOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
            stream_index: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub batch_sizes: Vec<usize>,
    pub draws: usize,
}

fn default_jacobian_shapes() -> Vec<(usize, usize)> {
    vec![(1, 2), (2, 2), (2, 4), (3, 3), (3, 5), (4, 8)]
}

fn default_jacobian_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacobianConfig {
    #[serde(default = "default_jacobian_shapes")]
    pub shapes: Vec<(usize, usize)>,
    #[serde(default = "default_jacobian_tolerance")]
    pub tolerance: f64,
}

impl Default for JacobianConfig {
    fn default() -> Self {
        Self {
            shapes: default_jacobian_shapes(),
            tolerance: default_jacobian_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionExperimentConfig {
    pub n: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearHeadConfig {
    pub eta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub objective: Option<ObjectiveConfig>,
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub theta0: Option<Theta0Config>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default)]
    pub q: Option<u32>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub power_iteration: Option<PowerIterConfig>,
    #[serde(default)]
    pub rho_pairs: Option<usize>,
    #[serde(default)]
    pub rho_half_width: Option<f64>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub jacobian: Option<JacobianConfig>,
    #[serde(default)]
    pub attention: Option<AttentionExperimentConfig>,
    #[serde(default)]
    pub linear_head: Option<LinearHeadConfig>,
}

impl RunConfig {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CliError> {
        serde_json::from_slice(bytes).map_err(|e| CliError::config(e.to_string()))
    }

    fn require<'a, T>(section: &'a Option<T>, field: &str, experiment: &str) -> Result<&'a T, CliError> {
        section.as_ref().ok_or_else(|| {
            CliError::config(format!("`{field}` is required for the {experiment} experiment"))
        })
    }

    pub fn objective(&self) -> Result<&ObjectiveConfig, CliError> {
        Self::require(&self.objective, "objective", self.experiment.name())
    }

    pub fn optimizer(&self) -> Result<&OptimizerConfig, CliError> {
        Self::require(&self.optimizer, "optimizer", self.experiment.name())
    }

    pub fn theta0(&self) -> Theta0Config {
        self.theta0.clone().unwrap_or_default()
    }

    /// Full validation pass: every constant the chosen experiment needs must
    /// be present and in range before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::config("`seeds` must not be empty"));
        }
        let name = self.experiment.name();
        match self.experiment {
            Experiment::Quadratic | Experiment::Complexity => {
                self.objective()?.build()?;
                let optimizer = self.optimizer()?;
                optimizer.schedule.build()?;
                let steps = *Self::require(&self.steps, "steps", name)?;
                if steps == 0 {
                    return Err(CliError::config("`steps` must be at least 1"));
                }
                if optimizer.batch_size.is_some()
                    && !matches!(self.objective()?, ObjectiveConfig::Softmax { .. })
                {
                    return Err(CliError::config(
                        "optimizer.batch_size requires a sampled objective (`kind: softmax`)",
                    ));
                }
                if self.experiment == Experiment::Complexity {
                    let eps = Self::require(&self.epsilons, "epsilons", name)?;
                    if eps.is_empty() {
                        return Err(CliError::config("`epsilons` must not be empty"));
                    }
                    if eps.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
                        return Err(CliError::config("`epsilons` entries must be positive"));
                    }
                    let q = *Self::require(&self.q, "q", name)?;
                    if q != 1 && q != 2 {
                        return Err(CliError::config("`q` must be 1 or 2"));
                    }
                }
            }
            Experiment::Heterogeneity => {
                self.objective()?.build()?;
                if let Some(noise) = &self.noise {
                    let obj = self.objective()?.build_softmax()?;
                    let n = obj.num_samples();
                    if noise.batch_sizes.is_empty() {
                        return Err(CliError::config("`noise.batch_sizes` must not be empty"));
                    }
                    if noise.batch_sizes.iter().any(|&b| b == 0 || b > n) {
                        return Err(CliError::config(format!(
                            "`noise.batch_sizes` entries must be in 1..={n}"
                        )));
                    }
                    if noise.draws < 2 {
                        return Err(CliError::config("`noise.draws` must be at least 2"));
                    }
                }
            }
            Experiment::Noise => {
                let obj = self.objective()?.build_softmax()?;
                let noise = Self::require(&self.noise, "noise", name)?;
                if noise.batch_sizes.is_empty() {
                    return Err(CliError::config("`noise.batch_sizes` must not be empty"));
                }
                let n = obj.num_samples();
                if noise.batch_sizes.iter().any(|&b| b == 0 || b > n) {
                    return Err(CliError::config(format!(
                        "`noise.batch_sizes` entries must be in 1..={n}"
                    )));
                }
                if noise.draws < 2 {
                    return Err(CliError::config("`noise.draws` must be at least 2"));
                }
            }
            Experiment::JacobianCheck => {
                let jac = self.jacobian.clone().unwrap_or_default();
                if jac.shapes.is_empty() {
                    return Err(CliError::config("`jacobian.shapes` must not be empty"));
                }
                if jac.shapes.iter().any(|&(n, d)| n == 0 || d == 0) {
                    return Err(CliError::config("`jacobian.shapes` entries must be positive"));
                }
            }
            Experiment::Attention => {
                let att = Self::require(&self.attention, "attention", name)?;
                if att.n < 2 {
                    return Err(CliError::config("`attention.n` must be at least 2"));
                }
                if att.trials == 0 {
                    return Err(CliError::config("`attention.trials` must be at least 1"));
                }
            }
            Experiment::LinearHead => {
                self.objective()?.build_softmax()?;
                let lh = Self::require(&self.linear_head, "linear_head", name)?;
                if !(lh.eta > 0.0) || !lh.eta.is_finite() {
                    return Err(CliError::config("`linear_head.eta` must be positive"));
                }
            }
        }
        Ok(())
    }
}
