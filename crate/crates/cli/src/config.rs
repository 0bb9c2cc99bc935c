//! Experiment configuration: a strict TOML tree (unknown keys rejected,
//! parse errors carry line/field diagnostics) plus builders turning the
//! blocks into models, grids and step controllers.

use fwminact_core::models::{
    CustomModel, CylCoeff, CylMode, DriftKind, FluxKind, MonotoneModel, MonotoneSde,
    PorousMedium, RdMode, RdModeKind, ReactionDiffusion, ReactionKind, SigmaKind,
};
use fwminact_core::noise::uniform_grid;
use fwminact_core::solver::StepConfig;
use fwminact_core::triple::StateVec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub space: SpaceBlock,
    pub time: TimeBlock,
    pub noise: NoiseBlock,
    pub task: TaskBlock,
    pub output: OutputBlock,
    /// Present when the config was loaded back from a run manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// monotone_sde | reaction_diffusion | porous_medium | custom
    pub name: String,
    /// SDE drifts: linear | cubic | anti_cubic | sign
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_rate: Option<f64>,
    /// SDE diffusions: identity | tanh | quadratic
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_scale: Option<f64>,
    /// Reaction-diffusion flux: p_laplacian | exponential
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<String>,
    /// Reaction-diffusion zero-order term: odd_power | none
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<String>,
    /// Porous-medium exponent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Porous-medium nonlinearity exponent (defaults to p - 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Explicit initial state (overrides the profile).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Named initial profile: zero | sine
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_scale: Option<f64>,
    /// Declared-constant overrides for name = "custom".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsBlock>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConstantsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1_mono: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2_mono: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_a2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpaceBlock {
    pub dim: usize,
    #[serde(default = "default_q")]
    pub q1: f64,
    #[serde(default = "default_q")]
    pub q2: f64,
}

fn default_q() -> f64 {
    2.0
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub t_end: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_depth: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    pub modes: usize,
    pub master_seed: u64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    /// simulate | skeleton | minact | mc-ldp | check-hypotheses
    pub kind: String,
    // simulate / skeleton
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_csv: Option<String>,
    // minact
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_path_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_radius: Option<f64>,
    // mc-ldp
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// prob | laplace
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// terminal_coord_ge | terminal_ball_h | terminal_norm_ge
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_coord: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_radius: Option<f64>,
    /// terminal_sq_dist_capped | constant | zero
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional_target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional_constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_eps_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_reference: Option<f64>,
    // check-hypotheses
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_check: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: String,
    #[serde(default = "default_precision")]
    pub precision: usize,
}

fn default_precision() -> usize {
    17
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Content hash of the resolved config plus every referenced input file.
    pub input_hash: String,
    #[serde(default)]
    pub input_files: Vec<String>,
    pub resolved_seed: u64,
}

/// Configuration-level error (exit code 2 territory).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        const MODELS: [&str; 4] =
            ["monotone_sde", "reaction_diffusion", "porous_medium", "custom"];
        if !MODELS.contains(&self.model.name.as_str()) {
            return Err(ConfigError(format!(
                "model.name '{}' not one of {MODELS:?}",
                self.model.name
            )));
        }
        const TASKS: [&str; 5] =
            ["simulate", "skeleton", "minact", "mc-ldp", "check-hypotheses"];
        if !TASKS.contains(&self.task.kind.as_str()) {
            return Err(ConfigError(format!(
                "task.kind '{}' not one of {TASKS:?}",
                self.task.kind
            )));
        }
        if self.space.dim == 0 {
            return Err(ConfigError("space.dim must be positive".into()));
        }
        if !(self.time.t_end > 0.0) || self.time.steps == 0 {
            return Err(ConfigError("time.t_end must be > 0 and time.steps >= 1".into()));
        }
        if self.noise.modes == 0 {
            return Err(ConfigError("noise.modes must be >= 1".into()));
        }
        if self.space.q1 < 2.0 || self.space.q2 < 2.0 {
            return Err(ConfigError("space exponents must be >= 2".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.time.t_end, self.time.steps)
    }

    pub fn step_config(&self) -> StepConfig {
        let mut cfg = StepConfig::default();
        if let Some(theta) = self.time.theta {
            cfg.theta = theta;
        }
        if let Some(tol) = self.time.newton_tol {
            cfg.newton_tol = tol;
        }
        if let Some(n) = self.time.newton_max_iter {
            cfg.newton_max_iter = n;
        }
        if let Some(d) = self.time.retry_depth {
            cfg.retry_depth = d;
        }
        cfg
    }

    /// Builds the configured model. The noise block must agree with the
    /// model's mode count.
    pub fn build_model(&self) -> Result<Box<dyn MonotoneModel>, ConfigError> {
        let dim = self.space.dim;
        let m = &self.model;
        let model: Box<dyn MonotoneModel> = match m.name.as_str() {
            "monotone_sde" | "custom" => {
                let drift = match m.drift.as_deref().unwrap_or("linear") {
                    "linear" => DriftKind::Linear { rate: m.drift_rate.unwrap_or(1.0) },
                    "cubic" => DriftKind::Cubic { rate: m.drift_rate.unwrap_or(1.0) },
                    "anti_cubic" => DriftKind::AntiCubic,
                    "sign" => DriftKind::SignDrift,
                    other => {
                        return Err(ConfigError(format!("model.drift '{other}' unknown")))
                    }
                };
                let scale = m.sigma_scale.unwrap_or(1.0);
                let sigma = match m.sigma.as_deref().unwrap_or("identity") {
                    "identity" => SigmaKind::Identity { scale },
                    "tanh" => SigmaKind::TanhDiag { scale },
                    "quadratic" => SigmaKind::Quadratic { scale },
                    other => {
                        return Err(ConfigError(format!("model.sigma '{other}' unknown")))
                    }
                };
                let x0 = self.initial_vector(dim)?;
                let sde = MonotoneSde::new(dim, drift, sigma, x0)
                    .map_err(|e| ConfigError(e.to_string()))?;
                if m.name == "custom" {
                    Box::new(custom_from_sde(sde, m.constants.clone().unwrap_or_default()))
                } else {
                    if m.constants.is_some() {
                        return Err(ConfigError(
                            "model.constants overrides need model.name = 'custom'".into(),
                        ));
                    }
                    Box::new(sde)
                }
            }
            "reaction_diffusion" => {
                let flux = match m.flux.as_deref().unwrap_or("p_laplacian") {
                    "p_laplacian" => FluxKind::PowerLaw,
                    "exponential" => FluxKind::Exponential,
                    other => return Err(ConfigError(format!("model.flux '{other}' unknown"))),
                };
                let reaction = match m.reaction.as_deref().unwrap_or("odd_power") {
                    "odd_power" => ReactionKind::OddPower,
                    "none" => ReactionKind::None,
                    other => {
                        return Err(ConfigError(format!("model.reaction '{other}' unknown")))
                    }
                };
                let scale = m.sigma_scale.unwrap_or(0.5);
                let modes: Vec<RdMode> = (1..=self.noise.modes)
                    .map(|j| {
                        let mode_scale = scale / j as f64;
                        if j % 2 == 1 {
                            RdMode {
                                kind: RdModeKind::MultiplicativeTanh { wave: j },
                                scale: mode_scale,
                            }
                        } else {
                            RdMode { kind: RdModeKind::AdditiveSine { wave: j }, scale: mode_scale }
                        }
                    })
                    .collect();
                let x0 = self.initial_vector(dim)?;
                Box::new(
                    ReactionDiffusion::new(
                        dim,
                        self.space.q1,
                        self.space.q2,
                        flux,
                        reaction,
                        modes,
                        x0,
                    )
                    .map_err(|e| ConfigError(e.to_string()))?,
                )
            }
            "porous_medium" => {
                let p = m.p.unwrap_or(3.0);
                let gamma = m.gamma.unwrap_or(p - 2.0);
                let scale = m.sigma_scale.unwrap_or(0.4);
                let mesh = 1.0 / (dim as f64 + 1.0);
                let profile = |wave: usize| -> Vec<f64> {
                    (0..dim)
                        .map(|i| {
                            let xi = (i as f64 + 1.0) * mesh;
                            (wave as f64 * std::f64::consts::PI * xi).sin()
                        })
                        .collect()
                };
                let base: Vec<f64> = profile(1);
                let modes: Vec<CylMode> = (1..=self.noise.modes)
                    .map(|k| {
                        let dir: Vec<f64> =
                            profile(k).iter().map(|v| scale / k as f64 * v).collect();
                        let coeff = if k == 1 {
                            CylCoeff::Constant(1.0)
                        } else {
                            CylCoeff::TanhOfProbe { gain: 1.0 }
                        };
                        CylMode { direction: dir, probe: base.clone(), coeff }
                    })
                    .collect();
                let x0 = self.initial_vector(dim)?;
                Box::new(
                    PorousMedium::new(dim, p, gamma, modes, x0)
                        .map_err(|e| ConfigError(e.to_string()))?,
                )
            }
            _ => unreachable!("validated above"),
        };
        if model.noise_dim() != self.noise.modes {
            return Err(ConfigError(format!(
                "noise.modes = {} but the model exposes {} modes",
                self.noise.modes,
                model.noise_dim()
            )));
        }
        Ok(model)
    }

    fn initial_vector(&self, dim: usize) -> Result<Vec<f64>, ConfigError> {
        if let Some(x0) = &self.model.x0 {
            if x0.len() != dim {
                return Err(ConfigError(format!(
                    "model.x0 has {} entries; space.dim is {dim}",
                    x0.len()
                )));
            }
            return Ok(x0.clone());
        }
        let scale = self.model.x0_scale.unwrap_or(0.8);
        match self.model.x0_profile.as_deref().unwrap_or("zero") {
            "zero" => Ok(vec![0.0; dim]),
            "sine" => {
                let mesh = 1.0 / (dim as f64 + 1.0);
                Ok((0..dim)
                    .map(|i| {
                        let xi = (i as f64 + 1.0) * mesh;
                        scale * (std::f64::consts::PI * xi).sin()
                    })
                    .collect())
            }
            other => Err(ConfigError(format!("model.x0_profile '{other}' unknown"))),
        }
    }
}

/// Wraps an SDE as a custom model with overridden declared constants, so
/// the hypothesis checker can probe user-supplied claims.
fn custom_from_sde(sde: MonotoneSde, over: ConstantsBlock) -> CustomModel {
    let mut constants = *sde.constants();
    if let Some(v) = over.lambda1 {
        constants.lambda1 = v;
    }
    if let Some(v) = over.lambda2 {
        constants.lambda2 = v;
    }
    if let Some(v) = over.lambda3 {
        constants.lambda3 = v;
    }
    if let Some(v) = over.lambda0 {
        constants.lambda0 = v;
    }
    if let Some(v) = over.lambda1_mono {
        constants.lambda1_mono = v;
    }
    if let Some(v) = over.lambda2_mono {
        constants.lambda2_mono = v;
    }
    if let Some(v) = over.c_a1 {
        constants.c_a1 = v;
    }
    if let Some(v) = over.c_a2 {
        constants.c_a2 = v;
    }
    if let Some(v) = over.beta1 {
        constants.beta1 = v;
    }
    let space = sde.space().clone();
    let noise_dim = sde.noise_dim();
    let x0 = sde.initial_state().clone();
    let shared = std::sync::Arc::new(sde);
    let a1 = shared.clone();
    let a2 = shared.clone();
    let b = shared.clone();
    let hs = shared.clone();
    let jac = shared;
    CustomModel::new(
        space,
        noise_dim,
        x0,
        constants,
        move |t, x: &StateVec| a1.apply_a1(t, x),
        move |t, x: &StateVec| a2.apply_a2(t, x),
        move |t, x: &StateVec, u: &[f64]| b.apply_b(t, x, u),
        move |t, x: &StateVec| hs.b_hs_norm_sq(t, x),
    )
    .with_drift_jacobian(move |t, x| {
        jac.drift_jacobian(t, x).expect("sde models carry analytic jacobians")
    })
}
