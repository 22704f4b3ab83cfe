//! Pretraining, rollout collection and the PPO loop with a receding-horizon
//! predictor and an adaptive style coefficient.

pub mod config;
pub mod gae;
pub mod horizon;
pub mod ppo;
pub mod predictor;
pub mod pretrain;
pub mod rollout;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bezier::{recency_weights, BernsteinTable};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::geometry::Track;
use crate::nn::Adam;
use crate::policy::PolicyBundle;
use crate::reward::RewardConfig;

pub use config::{ConstraintConfig, Mode, PpoConfig, PredictorConfig, PretrainConfig, TrainerConfig};
pub use gae::RunningMeanStd;
pub use horizon::{assemble_rewards, compute_horizon_rewards, update_alpha_s};
pub use ppo::PpoMetrics;
pub use predictor::{update_predictor, PredictorHead, PredictorTrace};
pub use pretrain::{pretrain, PretrainReport};
pub use rollout::{
    collect_rollouts, mix_seed, FixedReference, LapEvent, ReferenceSource, RolloutBuffer,
    RolloutSettings, RtdSampler,
};

pub const CHECKPOINT_VERSION: u32 = 1;
const REWARD_CLIP: f64 = 10.0;
const PREDICTOR_TAG: u64 = 0x5053;
const PPO_TAG: u64 = 0x5050;

/// One row of the per-update metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub update: u64,
    pub env_steps: u64,
    pub mean_r_p: f64,
    pub mean_r_s: f64,
    pub alpha_s: f64,
    pub best_lap_time: Option<f64>,
    pub mro: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub predictor_val_ll: Option<f64>,
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Everything produced by one iteration of the training loop.
#[derive(Clone, Debug)]
pub struct UpdateReport {
    pub row: MetricsRow,
    pub ppo: PpoMetrics,
    pub predictor: Option<PredictorTrace>,
    pub laps: Vec<LapEvent>,
    pub mean_r_p_psi: f64,
    pub mean_r_s_psi: f64,
    /// `alpha_s` used to assemble this update's rewards.
    pub alpha_s_before: f64,
}

/// Learnable state carried across updates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainerState {
    pub bundle: PolicyBundle,
    pub policy_opt: Adam,
    pub predictor_opt: Adam,
    pub alpha_s: f64,
    pub reward_rms: RunningMeanStd,
    pub update: u64,
    pub env_steps: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trainer {
    pub version: u32,
    pub seed: u64,
    pub cfg: TrainerConfig,
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub state: TrainerState,
}

impl Trainer {
    pub fn new(
        cfg: TrainerConfig,
        env: EnvConfig,
        reward: RewardConfig,
        bundle: PolicyBundle,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        reward.validate()?;
        let state = TrainerState {
            policy_opt: Adam::new(bundle.n_params(), cfg.ppo.learning_rate),
            predictor_opt: Adam::new(bundle.predictor.n_params(), cfg.predictor.learning_rate),
            alpha_s: cfg.initial_alpha_s(),
            reward_rms: RunningMeanStd::default(),
            update: 0,
            env_steps: 0,
            bundle,
        };
        Ok(Trainer {
            version: CHECKPOINT_VERSION,
            seed,
            cfg,
            env,
            reward,
            state,
        })
    }

    pub fn bundle(&self) -> &PolicyBundle {
        &self.state.bundle
    }

    fn head(&self) -> PredictorHead {
        PredictorHead {
            degree: self.state.bundle.degree,
            position_scale: self.state.bundle.position_scale,
        }
    }

    /// Collect, fit the predictor, assign rewards, then PPO and the
    /// style-coefficient step.
    pub fn update(&mut self, track: &Arc<Track>, source: &dyn ReferenceSource) -> Result<UpdateReport> {
        let update = self.state.update;
        let ppo_cfg = self.cfg.ppo.clone();
        let settings = RolloutSettings {
            n_step: ppo_cfg.n_step,
            num_env: ppo_cfg.num_env,
            max_episode_steps: ppo_cfg.max_episode_steps,
            deterministic: false,
        };
        let mut buf = collect_rollouts(
            &self.state.bundle,
            track,
            source,
            &self.env,
            &self.reward,
            &settings,
            self.seed,
            update,
        )?;

        let horizon = self.cfg.predictor.horizon;
        let table = BernsteinTable::new(self.state.bundle.degree, horizon);
        let weights = recency_weights(horizon, self.cfg.predictor.lambda_psi);
        let mut trace = None;
        if self.cfg.mode.uses_horizon() {
            let latents = self.state.bundle.latent(buf.obs.view())?;
            let idx = buf.future_indices(horizon);
            if !idx.is_empty() {
                let mut inputs = Array2::zeros((idx.len(), latents.ncols()));
                for (r, &i) in idx.iter().enumerate() {
                    inputs.row_mut(r).assign(&latents.row(i));
                }
                let targets: Vec<_> = idx.iter().map(|&i| buf.future(i, horizon).unwrap()).collect();
                let mut rng =
                    ChaCha8Rng::seed_from_u64(mix_seed(self.seed, &[update, PREDICTOR_TAG]));
                let head = self.head();
                trace = Some(update_predictor(
                    &mut self.state.bundle.predictor,
                    &mut self.state.predictor_opt,
                    head,
                    &inputs,
                    &targets,
                    &self.cfg.predictor,
                    &mut rng,
                )?);
            }
            compute_horizon_rewards(
                &mut buf,
                &self.state.bundle.predictor,
                self.head(),
                &latents,
                &self.reward,
                &table,
                self.seed,
                update,
            )?;
        }
        let alpha_before = self.state.alpha_s;
        assemble_rewards(&mut buf, alpha_before);
        self.compute_advantages(&mut buf);

        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, &[update, PPO_TAG]));
        let h = self
            .cfg
            .mode
            .uses_horizon()
            .then_some((horizon, &table, &weights[..]));
        let ppo = ppo::ppo_update(
            &mut self.state.bundle,
            &mut self.state.policy_opt,
            &buf,
            &ppo_cfg,
            h,
            &mut rng,
        )?;

        let mean_r_s = buf.mean_style_reward();
        if self.cfg.mode == Mode::Ours {
            let c = &self.cfg.constraint;
            self.state.alpha_s =
                update_alpha_s(self.state.alpha_s, mean_r_s, c.r_hat, c.alpha_s_lr, c.literal_sign);
        }
        self.state.update += 1;
        self.state.env_steps += buf.len() as u64;
        let n = buf.len() as f64;
        let row = MetricsRow {
            update,
            env_steps: self.state.env_steps,
            mean_r_p: buf.mean_progress_reward(),
            mean_r_s,
            alpha_s: self.state.alpha_s,
            best_lap_time: buf.laps.iter().map(|l| l.lap_time).reduce(f64::min),
            mro: buf.mean_offset(),
            kl: ppo.approx_kl,
            clip_fraction: ppo.clip_fraction,
            predictor_val_ll: trace.as_ref().map(|t| t.best_validation),
        };
        Ok(UpdateReport {
            row,
            ppo,
            predictor: trace,
            laps: buf.laps.clone(),
            mean_r_p_psi: buf.rewards.iter().map(|r| r.r_p_psi).sum::<f64>() / n,
            mean_r_s_psi: buf.rewards.iter().map(|r| r.r_s_psi).sum::<f64>() / n,
            alpha_s_before: alpha_before,
        })
    }

    fn compute_advantages(&mut self, buf: &mut RolloutBuffer) {
        let p = &self.cfg.ppo;
        let (ne, ns) = (buf.n_env, buf.n_step);
        let mut rewards: Vec<Vec<f64>> = (0..ne)
            .map(|e| buf.total_rewards[e * ns..(e + 1) * ns].to_vec())
            .collect();
        if p.normalize_rewards {
            let ends: Vec<Vec<bool>> = (0..ne)
                .map(|e| buf.episode_end[e * ns..(e + 1) * ns].to_vec())
                .collect();
            gae::normalize_rewards(&mut self.state.reward_rms, &mut rewards, &ends, p.gamma, REWARD_CLIP);
        }
        for (e, r) in rewards.iter().enumerate() {
            let span = e * ns..(e + 1) * ns;
            let (adv, ret) = gae::gae(
                r,
                &buf.values[span.clone()],
                &buf.episode_end[span.clone()],
                &buf.bootstrap[span.clone()],
                p.gamma,
                p.gae_lambda,
            );
            buf.advantages[span.clone()].copy_from_slice(&adv);
            buf.returns[span].copy_from_slice(&ret);
        }
        gae::normalize(&mut buf.advantages);
    }

    /// Runs updates until at least `total_steps` environment steps have been
    /// collected in total. `on_update` sees every report as it is produced.
    pub fn train(
        &mut self,
        track: &Arc<Track>,
        source: &dyn ReferenceSource,
        total_steps: u64,
        mut on_update: impl FnMut(&Trainer, &UpdateReport) -> Result<()>,
    ) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        while self.state.env_steps < total_steps {
            let report = self.update(track, source)?;
            on_update(self, &report)?;
            rows.push(report.row);
        }
        Ok(rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let t: Trainer = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if t.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {}", t.version)));
        }
        Ok(t)
    }
}
