use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{EnvConfig, RaceEnv, RelativeAction, Termination, OBS_DIM};
use crate::error::Result;
use crate::eval::LapTimer;
use crate::geometry::{Pose, ReferenceTrajectory, Track, Vec2};
use crate::nn::{gaussian_log_prob, gaussian_sample};
use crate::policy::PolicyBundle;
use crate::reward::{RewardBreakdown, RewardConfig};
use crate::rtd::{sample_reference, TrajectoryDistributionModel};

/// Supplies one reference line per episode.
pub trait ReferenceSource: Sync {
    fn sample(&self, seed: u64) -> Result<Arc<ReferenceTrajectory>>;
}

/// Draws references from a fitted trajectory distribution.
pub struct RtdSampler<'a> {
    pub model: &'a TrajectoryDistributionModel,
    pub track: &'a Track,
}

impl ReferenceSource for RtdSampler<'_> {
    fn sample(&self, seed: u64) -> Result<Arc<ReferenceTrajectory>> {
        Ok(Arc::new(sample_reference(self.model, self.track, seed)?))
    }
}

/// Always the same reference.
pub struct FixedReference(pub Arc<ReferenceTrajectory>);

impl ReferenceSource for FixedReference {
    fn sample(&self, _seed: u64) -> Result<Arc<ReferenceTrajectory>> {
        Ok(self.0.clone())
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut h = seed ^ 0x243F_6A88_85A3_08D3;
    for &t in tags {
        h = h.wrapping_add(t).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// A completed lap observed during collection or evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LapEvent {
    pub env: usize,
    pub step: usize,
    pub lap_time: f64,
    pub mro: f64,
}

#[derive(Clone, Debug)]
pub struct RolloutSettings {
    pub n_step: usize,
    pub num_env: usize,
    pub max_episode_steps: usize,
    pub deterministic: bool,
}

/// Transitions of all environments, stored env-major (`env * n_step + t`).
#[derive(Clone, Debug)]
pub struct RolloutBuffer {
    pub n_env: usize,
    pub n_step: usize,
    pub obs: Array2<f64>,
    pub actions: Vec<[f64; 2]>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Pose before the step.
    pub poses: Vec<Pose>,
    /// Position after the step.
    pub next_positions: Vec<Vec2>,
    pub rewards: Vec<RewardBreakdown>,
    pub terminations: Vec<Termination>,
    pub episode_end: Vec<bool>,
    /// Value of the successor state where an episode segment ends without a
    /// terminal; zero otherwise.
    pub bootstrap: Vec<f64>,
    pub episode: Vec<usize>,
    pub references: Vec<Arc<ReferenceTrajectory>>,
    /// Distance to the reference after the step.
    pub offsets: Vec<f64>,
    pub laps: Vec<LapEvent>,
    pub total_rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// The next `horizon` positions in the frame of step `i`, if all of them
    /// belong to the same episode inside this buffer.
    pub fn future(&self, i: usize, horizon: usize) -> Option<Vec<Vec2>> {
        let t = i % self.n_step;
        if horizon == 0 || t + horizon > self.n_step {
            return None;
        }
        let last = i + horizon - 1;
        if self.episode[last] != self.episode[i] {
            return None;
        }
        let pose = self.poses[i];
        Some(
            self.next_positions[i..=last]
                .iter()
                .map(|&p| pose.to_local(p))
                .collect(),
        )
    }

    /// Indices that carry a complete future.
    pub fn future_indices(&self, horizon: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let t = i % self.n_step;
                t + horizon <= self.n_step && self.episode[i + horizon - 1] == self.episode[i]
            })
            .collect()
    }

    pub fn mean_style_reward(&self) -> f64 {
        self.rewards.iter().map(|r| r.r_s).sum::<f64>() / self.len() as f64
    }

    pub fn mean_progress_reward(&self) -> f64 {
        self.rewards.iter().map(|r| r.r_p).sum::<f64>() / self.len() as f64
    }

    pub fn mean_offset(&self) -> f64 {
        self.offsets.iter().sum::<f64>() / self.len() as f64
    }
}

struct EnvTrace {
    obs: Vec<f64>,
    actions: Vec<[f64; 2]>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    poses: Vec<Pose>,
    next_positions: Vec<Vec2>,
    rewards: Vec<RewardBreakdown>,
    terminations: Vec<Termination>,
    episode_end: Vec<bool>,
    bootstrap: Vec<f64>,
    episode: Vec<usize>,
    references: Vec<Arc<ReferenceTrajectory>>,
    offsets: Vec<f64>,
    laps: Vec<LapEvent>,
}

#[allow(clippy::too_many_arguments)]
fn collect_env(
    bundle: &PolicyBundle,
    track: &Arc<Track>,
    source: &dyn ReferenceSource,
    env_cfg: &EnvConfig,
    reward_cfg: &RewardConfig,
    settings: &RolloutSettings,
    env_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EnvTrace> {
    let n = settings.n_step;
    let mut tr = EnvTrace {
        obs: Vec::with_capacity(n * OBS_DIM),
        actions: Vec::with_capacity(n),
        log_probs: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        poses: Vec::with_capacity(n),
        next_positions: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        terminations: Vec::with_capacity(n),
        episode_end: Vec::with_capacity(n),
        bootstrap: Vec::with_capacity(n),
        episode: Vec::with_capacity(n),
        references: Vec::new(),
        offsets: Vec::with_capacity(n),
        laps: Vec::new(),
    };
    let centerline = track.centerline();
    let reference = source.sample(rng.gen())?;
    tr.references.push(reference.clone());
    let mut env = RaceEnv::new(env_cfg.clone(), track.clone(), reference);
    let mut clock = LapTimer::new(track.length());
    let mut s_center = centerline.project(env.state().position).s;
    let mut s_ref = env.reference().curve().project(env.state().position).s;
    let mut obs = env.observe();
    for t in 0..n {
        let (mean, value) = bundle.mean_and_value(&obs)?;
        let action: Vec<f64> = if settings.deterministic {
            mean.to_vec()
        } else {
            gaussian_sample(&mean, &bundle.log_std, rng)
        };
        let logp = gaussian_log_prob(&mean, &bundle.log_std, &action);
        let pose = env.state().pose();
        let out = env.step(RelativeAction::new(action[0], action[1]))?;
        let pos = out.next_state.position;

        let tau = env.reference().curve();
        let proj = tau.project(pos);
        let offset = (pos - proj.foot).norm();
        let r_p = tau.progress_unchecked(s_ref, proj.s);
        let r_s = (-reward_cfg.alpha_d * offset * offset).exp();
        s_ref = proj.s;
        let sc = centerline.project(pos).s;
        let dp = centerline.progress_unchecked(s_center, sc);
        s_center = sc;
        if let Some((lap_time, mro)) = clock.advance(dp, offset, env_cfg.dt) {
            tr.laps.push(LapEvent {
                env: env_index,
                step: t,
                lap_time,
                mro,
            });
        }

        tr.obs.extend_from_slice(&obs);
        tr.actions.push([action[0], action[1]]);
        tr.log_probs.push(logp);
        tr.values.push(value);
        tr.poses.push(pose);
        tr.next_positions.push(pos);
        tr.rewards.push(RewardBreakdown {
            r_p,
            r_s,
            penalty: reward_cfg.penalty(out.terminated),
            ..Default::default()
        });
        tr.terminations.push(out.terminated);
        tr.episode.push(tr.references.len() - 1);
        tr.offsets.push(offset);

        let terminal = out.terminated.is_terminal();
        let truncated = !terminal && env.steps() >= settings.max_episode_steps;
        let last = t + 1 == n;
        obs = env.observe();
        if terminal {
            tr.episode_end.push(true);
            tr.bootstrap.push(0.0);
        } else if truncated || last {
            tr.episode_end.push(true);
            tr.bootstrap.push(bundle.mean_and_value(&obs)?.1);
        } else {
            tr.episode_end.push(false);
            tr.bootstrap.push(0.0);
        }
        if (terminal || truncated) && !last {
            let reference = source.sample(rng.gen())?;
            tr.references.push(reference.clone());
            env.reset(reference);
            clock = LapTimer::new(track.length());
            s_center = centerline.project(env.state().position).s;
            s_ref = env.reference().curve().project(env.state().position).s;
            obs = env.observe();
        }
    }
    Ok(tr)
}

/// Runs every environment for `n_step` steps from a fresh spawn. Environment
/// `e` draws from a stream seeded by `(seed, update, e)`.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts(
    bundle: &PolicyBundle,
    track: &Arc<Track>,
    source: &dyn ReferenceSource,
    env_cfg: &EnvConfig,
    reward_cfg: &RewardConfig,
    settings: &RolloutSettings,
    seed: u64,
    update: u64,
) -> Result<RolloutBuffer> {
    let traces: Vec<EnvTrace> = (0..settings.num_env)
        .into_par_iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[update, e as u64]));
            collect_env(bundle, track, source, env_cfg, reward_cfg, settings, e, &mut rng)
        })
        .collect::<Result<_>>()?;
    let total = settings.n_step * settings.num_env;
    let mut obs = Vec::with_capacity(total * OBS_DIM);
    let mut buf = RolloutBuffer {
        n_env: settings.num_env,
        n_step: settings.n_step,
        obs: Array2::zeros((0, OBS_DIM)),
        actions: Vec::with_capacity(total),
        log_probs: Vec::with_capacity(total),
        values: Vec::with_capacity(total),
        poses: Vec::with_capacity(total),
        next_positions: Vec::with_capacity(total),
        rewards: Vec::with_capacity(total),
        terminations: Vec::with_capacity(total),
        episode_end: Vec::with_capacity(total),
        bootstrap: Vec::with_capacity(total),
        episode: Vec::with_capacity(total),
        references: Vec::new(),
        offsets: Vec::with_capacity(total),
        laps: Vec::new(),
        total_rewards: vec![0.0; total],
        advantages: vec![0.0; total],
        returns: vec![0.0; total],
    };
    for tr in traces {
        let base = buf.references.len();
        obs.extend(tr.obs);
        buf.actions.extend(tr.actions);
        buf.log_probs.extend(tr.log_probs);
        buf.values.extend(tr.values);
        buf.poses.extend(tr.poses);
        buf.next_positions.extend(tr.next_positions);
        buf.rewards.extend(tr.rewards);
        buf.terminations.extend(tr.terminations);
        buf.episode_end.extend(tr.episode_end);
        buf.bootstrap.extend(tr.bootstrap);
        buf.episode.extend(tr.episode.into_iter().map(|k| k + base));
        buf.references.extend(tr.references);
        buf.offsets.extend(tr.offsets);
        buf.laps.extend(tr.laps);
    }
    buf.obs = Array2::from_shape_vec((total, OBS_DIM), obs).expect("consistent trace sizes");
    Ok(buf)
}
