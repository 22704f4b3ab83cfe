//! Step and receding-horizon rewards for progress and style imitation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bezier::BezierPrediction;
use crate::env::Termination;
use crate::error::{Error, Result};
use crate::geometry::{ArcLengthCurve, Pose, Vec2};

/// Horizon terms whose discount falls below this are skipped.
pub const DISCOUNT_CUTOFF: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Style distance scale (1/m^2).
    pub alpha_d: f64,
    /// Horizon discount.
    pub alpha_psi: f64,
    /// Monte Carlo samples per horizon marginal.
    pub n_mc: usize,
    pub penalty_off_track: f64,
    pub penalty_spin: f64,
    pub penalty_slow: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha_d: 0.01,
            alpha_psi: 0.8,
            n_mc: 8,
            penalty_off_track: -5.0,
            penalty_spin: -5.0,
            penalty_slow: -2.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_d > 0.0) {
            return Err(Error::Config("alpha_d must be positive".into()));
        }
        if !(self.alpha_psi > 0.0 && self.alpha_psi < 1.0) {
            return Err(Error::Config("alpha_psi must lie in (0, 1)".into()));
        }
        if self.n_mc == 0 {
            return Err(Error::Config("n_mc must be at least 1".into()));
        }
        if [self.penalty_off_track, self.penalty_spin, self.penalty_slow]
            .iter()
            .any(|p| *p > 0.0)
        {
            return Err(Error::Config("penalties must be non-positive".into()));
        }
        Ok(())
    }

    pub fn penalty(&self, termination: Termination) -> f64 {
        match termination {
            Termination::None => 0.0,
            Termination::OffTrack => self.penalty_off_track,
            Termination::Spin => self.penalty_spin,
            Termination::Slow => self.penalty_slow,
        }
    }

    /// `sum_{i=1}^{H} alpha_psi^i`, the ceiling of the horizon style term.
    pub fn horizon_style_bound(&self, horizon: usize) -> f64 {
        let a = self.alpha_psi;
        a * (1.0 - a.powi(horizon as i32)) / (1.0 - a)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_p: f64,
    pub r_s: f64,
    pub r_p_psi: f64,
    pub r_s_psi: f64,
    pub penalty: f64,
}

impl RewardBreakdown {
    /// `r_p + r_p_psi + alpha_s (r_s + r_s_psi) + penalty`.
    pub fn combine(&self, alpha_s: f64) -> f64 {
        self.r_p + self.r_p_psi + alpha_s * (self.r_s + self.r_s_psi) + self.penalty
    }
}

/// Signed progress along `tau` between the projections of two positions.
pub fn progress_reward(tau: &ArcLengthCurve, from: Vec2, to: Vec2) -> f64 {
    tau.progress_unchecked(tau.project(from).s, tau.project(to).s)
}

/// `exp(-alpha_d d^2)` with `d` the distance to the projection foot.
pub fn style_reward(tau: &ArcLengthCurve, position: Vec2, alpha_d: f64) -> f64 {
    let d2 = (position - tau.project(position).foot).norm_sq();
    (-alpha_d * d2).exp()
}

fn sample_marginal(mean: Vec2, variance: [f64; 2], rng: &mut impl Rng) -> Vec2 {
    let zx: f64 = rng.sample(StandardNormal);
    let zy: f64 = rng.sample(StandardNormal);
    Vec2::new(
        mean.x + variance[0].sqrt() * zx,
        mean.y + variance[1].sqrt() * zy,
    )
}

/// Monte Carlo estimate of the expected progress from the car to the final
/// horizon marginal. `pred` is in the frame of `pose`.
pub fn horizon_progress_reward(
    pred: &BezierPrediction,
    pose: &Pose,
    tau: &ArcLengthCurve,
    cfg: &RewardConfig,
    rng: &mut impl Rng,
) -> f64 {
    let s0 = tau.project(pose.position).s;
    horizon_progress_from(pred, pose, s0, tau, cfg.n_mc, rng)
}

/// As [`horizon_progress_reward`] with the car's arc coordinate precomputed.
pub fn horizon_progress_from(
    pred: &BezierPrediction,
    pose: &Pose,
    s0: f64,
    tau: &ArcLengthCurve,
    n_mc: usize,
    rng: &mut impl Rng,
) -> f64 {
    let h = pred.horizon();
    if h == 0 {
        return 0.0;
    }
    let (mean, var) = (pred.means[h - 1], pred.variances[h - 1]);
    let total: f64 = (0..n_mc)
        .map(|_| {
            let world = pose.to_world(sample_marginal(mean, var, rng));
            tau.progress_unchecked(s0, tau.project(world).s)
        })
        .sum();
    total / n_mc as f64
}

/// `sum_i alpha_psi^i E[exp(-alpha_d d_i^2)]`, each expectation estimated
/// with `n_mc` samples of the `i`-th marginal.
pub fn horizon_style_reward(
    pred: &BezierPrediction,
    pose: &Pose,
    tau: &ArcLengthCurve,
    cfg: &RewardConfig,
    rng: &mut impl Rng,
) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for i in 0..pred.horizon() {
        discount *= cfg.alpha_psi;
        if discount < DISCOUNT_CUTOFF {
            break;
        }
        let (mean, var) = (pred.means[i], pred.variances[i]);
        let mut acc = 0.0;
        for _ in 0..cfg.n_mc {
            let world = pose.to_world(sample_marginal(mean, var, rng));
            acc += style_reward(tau, world, cfg.alpha_d);
        }
        total += discount * acc / cfg.n_mc as f64;
    }
    total
}
