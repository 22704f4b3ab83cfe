use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which reward terms and style-coefficient schedule a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Step and horizon rewards, predictor auxiliary loss, adaptive alpha_s.
    Ours,
    /// Step progress and style rewards with a fixed alpha_s.
    Step,
    /// Step progress only.
    Crl,
}

impl Mode {
    pub fn uses_horizon(self) -> bool {
        self == Mode::Ours
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ours => "ours",
            Mode::Step => "step",
            Mode::Crl => "crl",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(Mode::Ours),
            "step" => Ok(Mode::Step),
            "crl" => Ok(Mode::Crl),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub n_step: usize,
    pub num_env: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub ent_coef: f64,
    pub learning_rate: f64,
    pub n_epochs: usize,
    pub batch_size: usize,
    pub kl_threshold: f64,
    pub vf_coef: f64,
    pub clip_range: f64,
    pub max_grad_norm: f64,
    /// Weight of the predictor log-likelihood in the policy objective.
    pub psi_coef: f64,
    pub normalize_rewards: bool,
    pub max_episode_steps: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            n_step: 8192,
            num_env: 8,
            gamma: 0.998,
            gae_lambda: 0.98,
            ent_coef: 1e-5,
            learning_rate: 1e-4,
            n_epochs: 4,
            batch_size: 1024,
            kl_threshold: 0.1,
            vf_coef: 1.25,
            clip_range: 0.2,
            max_grad_norm: 0.5,
            psi_coef: 1.0,
            normalize_rewards: true,
            max_episode_steps: 3000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    /// Horizon `H` in environment steps.
    pub horizon: usize,
    pub lambda_psi: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub validation_fraction: f64,
    /// Gradient steps between validation evaluations.
    pub eval_every: usize,
    pub patience: usize,
    pub max_steps: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            horizon: 100,
            lambda_psi: 1.0,
            learning_rate: 1e-3,
            batch_size: 256,
            validation_fraction: 0.1,
            eval_every: 10,
            patience: 3,
            max_steps: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub alpha_reg: f64,
    pub alpha_psi_pt: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 1,
            alpha_reg: 1.0,
            alpha_psi_pt: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintConfig {
    pub alpha_s_init: f64,
    pub alpha_s_lr: f64,
    pub r_hat: f64,
    /// Fixed style coefficient in `step` mode.
    pub step_alpha_s: f64,
    /// Use the update sign obtained by literally descending the multiplier loss.
    pub literal_sign: bool,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            alpha_s_init: 0.5,
            alpha_s_lr: 1e-4,
            r_hat: 0.009,
            step_alpha_s: 1.0,
            literal_sign: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub mode: Mode,
    pub ppo: PpoConfig,
    pub predictor: PredictorConfig,
    pub pretrain: PretrainConfig,
    pub constraint: ConstraintConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            mode: Mode::Ours,
            ppo: PpoConfig::default(),
            predictor: PredictorConfig::default(),
            pretrain: PretrainConfig::default(),
            constraint: ConstraintConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.ppo;
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(p.gamma) || !unit(p.gae_lambda) {
            return Err(Error::Config("gamma and gae_lambda must lie in (0, 1)".into()));
        }
        if p.n_step == 0 || p.num_env == 0 || p.batch_size == 0 || p.n_epochs == 0 {
            return Err(Error::Config(
                "n_step, num_env, batch_size and n_epochs must be positive".into(),
            ));
        }
        if !(p.learning_rate > 0.0 && p.clip_range > 0.0 && p.max_grad_norm > 0.0) {
            return Err(Error::Config(
                "learning_rate, clip_range and max_grad_norm must be positive".into(),
            ));
        }
        let q = &self.predictor;
        if q.horizon == 0 || !(q.lambda_psi > 0.0 && q.lambda_psi <= 1.0) {
            return Err(Error::Config(
                "predictor horizon must be positive and lambda_psi in (0, 1]".into(),
            ));
        }
        if !(q.validation_fraction > 0.0 && q.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in (0, 1)".into()));
        }
        let c = &self.constraint;
        if c.alpha_s_init < 0.0 || c.step_alpha_s < 0.0 || c.alpha_s_lr < 0.0 {
            return Err(Error::Config("style coefficients must be non-negative".into()));
        }
        if self.pretrain.batch_size == 0 {
            return Err(Error::Config("pretrain batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Style coefficient at the start of training for the configured mode.
    pub fn initial_alpha_s(&self) -> f64 {
        match self.mode {
            Mode::Ours => self.constraint.alpha_s_init,
            Mode::Step => self.constraint.step_alpha_s,
            Mode::Crl => 0.0,
        }
    }
}
