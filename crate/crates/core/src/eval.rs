//! Lap timing, mean reference offset, deterministic evaluation and Pareto
//! filtering.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, RaceEnv, RelativeAction};
use crate::error::{Error, Result};
use crate::geometry::{ArcLengthCurve, Track, Vec2};
use crate::policy::PolicyBundle;
use crate::trainer::rollout::{mix_seed, ReferenceSource};

const EVAL_TAG: u64 = 0x4556;

/// Times the first lap from the spawn point by accumulated centerline
/// progress, interpolating the crossing within the step. Also averages the
/// reference offset over the lap.
#[derive(Clone, Debug)]
pub struct LapTimer {
    length: f64,
    progress: f64,
    offset_sum: f64,
    steps: usize,
    done: bool,
}

impl LapTimer {
    pub fn new(length: f64) -> Self {
        LapTimer {
            length,
            progress: 0.0,
            offset_sum: 0.0,
            steps: 0,
            done: false,
        }
    }

    pub fn progress(&self) -> f64 {
        self.progress
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Mean offset over the steps recorded so far.
    pub fn mean_offset(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.offset_sum / self.steps as f64
        }
    }

    /// Records one step. Returns `(lap_time, mro)` on the step that
    /// completes the lap.
    pub fn advance(&mut self, dp: f64, offset: f64, dt: f64) -> Option<(f64, f64)> {
        if self.done {
            return None;
        }
        self.steps += 1;
        self.offset_sum += offset;
        let before = self.progress;
        self.progress += dp;
        if self.progress >= self.length && dp > 0.0 {
            self.done = true;
            let frac = (self.length - before) / dp;
            let time = (self.steps as f64 - 1.0 + frac) * dt;
            return Some((time, self.mean_offset()));
        }
        None
    }
}

/// Mean distance from each position to its closest point on `reference`.
pub fn mean_reference_offset(positions: &[Vec2], reference: &ArcLengthCurve) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    positions
        .iter()
        .map(|&p| (p - reference.project(p).foot).norm())
        .sum::<f64>()
        / positions.len() as f64
}

/// One evaluation episode. Unfinished episodes report elapsed time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LapRecord {
    pub lap_time: f64,
    pub mro: f64,
    pub seed: u64,
    pub update: u64,
    pub finished: bool,
}

/// Drives `n_laps` episodes with the policy mean, each against a fresh
/// reference, until the first lap completes, the car terminates or
/// `max_steps` elapse.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    bundle: &PolicyBundle,
    track: &Arc<Track>,
    source: &dyn ReferenceSource,
    env_cfg: &EnvConfig,
    n_laps: usize,
    max_steps: usize,
    seed: u64,
    update: u64,
) -> Result<Vec<LapRecord>> {
    (0..n_laps)
        .into_par_iter()
        .map(|k| {
            let reference = source.sample(mix_seed(seed, &[EVAL_TAG, k as u64]))?;
            let mut env = RaceEnv::new(env_cfg.clone(), track.clone(), reference);
            let centerline = track.centerline();
            let mut timer = LapTimer::new(track.length());
            let mut s_center = centerline.project(env.state().position).s;
            for _ in 0..max_steps {
                let (mean, _) = bundle.mean_and_value(&env.observe())?;
                let out = env.step(RelativeAction::new(mean[0], mean[1]))?;
                let pos = out.next_state.position;
                let tau = env.reference().curve();
                let offset = (pos - tau.project(pos).foot).norm();
                let sc = centerline.project(pos).s;
                let dp = centerline.progress_unchecked(s_center, sc);
                s_center = sc;
                if let Some((lap_time, mro)) = timer.advance(dp, offset, env_cfg.dt) {
                    return Ok(LapRecord {
                        lap_time,
                        mro,
                        seed,
                        update,
                        finished: true,
                    });
                }
                if out.terminated.is_terminal() {
                    break;
                }
            }
            Ok(LapRecord {
                lap_time: timer.steps() as f64 * env_cfg.dt,
                mro: timer.mean_offset(),
                seed,
                update,
                finished: false,
            })
        })
        .collect()
}

pub fn write_laps(path: impl AsRef<Path>, laps: &[LapRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for l in laps {
        w.serialize(l)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_laps(path: impl AsRef<Path>) -> Result<Vec<LapRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Finished laps sorted by ascending lap time.
pub fn ranked_laps(laps: &[LapRecord]) -> Vec<LapRecord> {
    let mut out: Vec<LapRecord> = laps.iter().filter(|l| l.finished).copied().collect();
    out.sort_by(|a, b| a.lap_time.total_cmp(&b.lap_time));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub lap_time: f64,
    pub mro: f64,
}

impl From<&LapRecord> for ParetoPoint {
    fn from(l: &LapRecord) -> Self {
        ParetoPoint {
            lap_time: l.lap_time,
            mro: l.mro,
        }
    }
}

/// Points not dominated in `(lap_time, mro)` with both minimized, duplicates
/// kept once, ordered by lap time.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.lap_time.total_cmp(&b.lap_time).then(a.mro.total_cmp(&b.mro)));
    sorted.dedup();
    let mut front: Vec<ParetoPoint> = Vec::new();
    let mut best_mro = f64::INFINITY;
    for p in sorted {
        if p.mro < best_mro {
            best_mro = p.mro;
            front.push(p);
        }
    }
    front
}

pub fn write_pareto(path: impl AsRef<Path>, points: &[ParetoPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Sample mean and standard error of the mean.
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
