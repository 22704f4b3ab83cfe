//! Scripted demonstration driver: a smoothed racing line, a curvature-limited
//! speed profile, pure-pursuit steering and per-lap smooth perturbations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{
    clip_increment, observe, step, EnvConfig, RelativeAction, Termination, VehicleState,
};
use crate::error::{Error, Result};
use crate::geometry::{ArcLengthCurve, ReferenceTrajectory, Track, Vec2};
use crate::tracks::curvature;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    /// Distance kept from the track edge (m).
    pub margin: f64,
    pub smoothing_iterations: usize,
    pub smoothing_gain: f64,
    /// Fraction of the friction-limited lateral acceleration used in corners.
    pub lateral_grip_fraction: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    pub v_cap: f64,
    pub lookahead_min: f64,
    /// Lookahead time for pure pursuit (s).
    pub lookahead_time: f64,
    pub speed_gain: f64,
    /// Amplitude of per-lap lateral perturbations at noise scale 1 (m).
    pub noise_lateral: f64,
    /// Relative amplitude of per-lap speed perturbations at noise scale 1.
    pub noise_speed: f64,
    pub noise_harmonics: usize,
    /// Std of Gaussian noise added to each executed increment; the recorded
    /// label stays the clean expert increment.
    pub execution_noise: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            margin: 1.5,
            smoothing_iterations: 4000,
            smoothing_gain: 0.4,
            lateral_grip_fraction: 0.7,
            max_accel: 4.0,
            max_decel: 7.0,
            v_cap: 60.0,
            lookahead_min: 6.0,
            lookahead_time: 0.5,
            speed_gain: 0.5,
            noise_lateral: 1.5,
            noise_speed: 0.05,
            noise_harmonics: 3,
            execution_noise: 0.05,
        }
    }
}

/// Smooth periodic perturbation `sum_k a_k sin(2 pi k phase + phi_k)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LapNoise {
    lateral: Vec<(f64, f64)>,
    speed: Vec<(f64, f64)>,
}

impl LapNoise {
    pub fn sample(cfg: &ExpertConfig, scale: f64, rng: &mut impl Rng) -> Self {
        let mut draw = |amp: f64| -> Vec<(f64, f64)> {
            (1..=cfg.noise_harmonics)
                .map(|k| {
                    let a = scale * amp * rng.gen_range(-1.0..1.0) / k as f64;
                    (a, rng.gen_range(0.0..std::f64::consts::TAU))
                })
                .collect()
        };
        let lateral = draw(cfg.noise_lateral);
        let speed = draw(cfg.noise_speed);
        LapNoise { lateral, speed }
    }

    fn eval(terms: &[(f64, f64)], phase: f64) -> f64 {
        terms
            .iter()
            .enumerate()
            .map(|(k, &(a, p))| a * ((k + 1) as f64 * std::f64::consts::TAU * phase + p).sin())
            .sum()
    }

    pub fn lateral(&self, phase: f64) -> f64 {
        Self::eval(&self.lateral, phase)
    }

    pub fn speed_factor(&self, phase: f64) -> f64 {
        1.0 + Self::eval(&self.speed, phase)
    }
}

/// Target path and speed for the scripted driver.
#[derive(Clone, Debug)]
pub struct RacingLine {
    pub lateral: Vec<f64>,
    pub reference: ReferenceTrajectory,
}

fn lateral_bounds(track: &Track, i: usize, margin: f64) -> (f64, f64) {
    let lo = -(track.half_width_right()[i] - margin).max(0.0);
    let hi = (track.half_width_left()[i] - margin).max(0.0);
    (lo, hi)
}

/// Laplacian-smoothed line within the track edges, perturbed by `noise`, with
/// a curvature-limited speed profile.
pub fn racing_line(
    track: &Track,
    env: &EnvConfig,
    cfg: &ExpertConfig,
    noise: &LapNoise,
) -> Result<RacingLine> {
    let c = track.centerline();
    let n = c.len();
    let closed = c.is_closed();
    let normals: Vec<Vec2> = (0..n).map(|i| c.vertex_tangent(i).perp_left()).collect();
    let base = c.points();
    let mut e = vec![0.0; n];
    let point = |e: &[f64], i: usize| base[i] + normals[i] * e[i];
    for _ in 0..cfg.smoothing_iterations {
        for i in 0..n {
            let (a, b) = if closed {
                ((i + n - 1) % n, (i + 1) % n)
            } else if i == 0 || i == n - 1 {
                continue;
            } else {
                (i - 1, i + 1)
            };
            let mid = (point(&e, a) + point(&e, b)) * 0.5;
            let shift = (mid - point(&e, i)).dot(normals[i]);
            let (lo, hi) = lateral_bounds(track, i, cfg.margin);
            e[i] = (e[i] + cfg.smoothing_gain * shift).clamp(lo, hi);
        }
    }
    let length = c.total_length();
    for i in 0..n {
        let (lo, hi) = lateral_bounds(track, i, cfg.margin);
        e[i] = (e[i] + noise.lateral(c.cum_s()[i] / length)).clamp(lo, hi);
    }
    let pts: Vec<Vec2> = (0..n).map(|i| point(&e, i)).collect();
    let kappa = curvature(&pts, closed);
    let a_lat = cfg.lateral_grip_fraction * env.vehicle.mu * 9.81;
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let vk = (a_lat / kappa[i].abs().max(1e-9)).sqrt().min(cfg.v_cap);
            vk * noise.speed_factor(c.cum_s()[i] / length)
        })
        .collect();
    let seg: Vec<f64> = (0..n)
        .map(|i| pts[i].distance(pts[(i + 1) % n]))
        .collect();
    let passes = if closed { 2 } else { 1 };
    for _ in 0..passes {
        for j in 0..n {
            let (i, k) = (j, (j + 1) % n);
            if !closed && k == 0 {
                continue;
            }
            v[k] = v[k].min((v[i] * v[i] + 2.0 * cfg.max_accel * seg[i]).sqrt());
        }
    }
    for _ in 0..passes {
        for j in (0..n).rev() {
            let (i, k) = (j, (j + 1) % n);
            if !closed && k == 0 {
                continue;
            }
            v[i] = v[i].min((v[k] * v[k] + 2.0 * cfg.max_decel * seg[i]).sqrt());
        }
    }
    let v: Vec<f64> = v.into_iter().map(|x| x.max(5.0)).collect();
    let reference = ReferenceTrajectory::new(ArcLengthCurve::new(pts, closed)?, v)?;
    Ok(RacingLine {
        lateral: e,
        reference,
    })
}

/// Pure-pursuit steering and proportional speed control along a racing line.
#[derive(Clone, Debug)]
pub struct ScriptedExpert {
    pub line: RacingLine,
    pub cfg: ExpertConfig,
    pub env: EnvConfig,
}

impl ScriptedExpert {
    pub fn new(line: RacingLine, cfg: ExpertConfig, env: EnvConfig) -> Self {
        ScriptedExpert { line, cfg, env }
    }

    /// Absolute action the controller would like to apply.
    pub fn desired_action(&self, state: &VehicleState) -> [f64; 2] {
        let curve = self.line.reference.curve();
        let p = &self.env.vehicle;
        let s = curve.project(state.position).s;
        let speed = state.speed();
        let ld = (self.cfg.lookahead_time * speed).max(self.cfg.lookahead_min);
        let target = state.pose().to_local(curve.point_at(s + ld));
        let kappa = 2.0 * target.y / target.norm_sq().max(1e-9);
        let steer = (kappa * p.wheelbase()).atan() / p.max_steer;
        let v_target = self.line.reference.speed_at(s + 0.5 * speed);
        let drag_ff = p.drag * speed * speed / p.drive_force;
        let throttle = self.cfg.speed_gain * (v_target - speed) + drag_ff;
        [throttle.clamp(-1.0, 1.0), steer.clamp(-1.0, 1.0)]
    }

    pub fn act(&self, state: &VehicleState) -> RelativeAction {
        let d = self.desired_action(state);
        clip_increment(
            RelativeAction::new(d[0] - state.current_action[0], d[1] - state.current_action[1]),
            self.env.max_increment,
        )
    }

    /// Car on the line start, aligned with it, at the line's speed.
    pub fn spawn(&self) -> VehicleState {
        crate::env::spawn(&self.line.reference)
    }
}

/// One driven demonstration: the states of a full lap plus `extra` steps
/// beyond the line so every lap step has a complete future.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoLap {
    /// `states[t + 1]` results from applying `executed[t]` to `states[t]`.
    pub states: Vec<VehicleState>,
    /// Clean expert increments at each state.
    pub actions: Vec<RelativeAction>,
    pub executed: Vec<RelativeAction>,
    pub lap_steps: usize,
    pub lap_time: f64,
}

/// Drives `expert` for one lap of centerline progress plus `extra` steps,
/// perturbing executed increments by `execution_noise`.
pub fn drive_lap(
    track: &Track,
    expert: &ScriptedExpert,
    extra: usize,
    rng: &mut impl Rng,
) -> Result<DemoLap> {
    let length = track.length();
    let c = track.centerline();
    let mut state = expert.spawn();
    let mut states = vec![state];
    let mut actions = Vec::new();
    let mut executed = Vec::new();
    let sigma = expert.cfg.execution_noise;
    let mut progress = 0.0;
    let mut s_prev = c.project(state.position).s;
    let mut lap: Option<(usize, f64)> = None;
    let max_steps = 200_000;
    let dt = expert.env.dt;
    for t in 0..max_steps {
        let a = expert.act(&state);
        let e = if sigma > 0.0 {
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            RelativeAction::new(a.d_alpha + sigma * zx, a.d_delta + sigma * zy)
        } else {
            a
        };
        let e = clip_increment(e, expert.env.max_increment);
        let out = step(&expert.env, &state, e, track, t + 1)?;
        if out.terminated != Termination::None {
            return Err(Error::ExpertFailed(format!(
                "{:?} after {} steps at progress {:.1} m",
                out.terminated,
                t + 1,
                progress
            )));
        }
        state = out.next_state;
        actions.push(a);
        executed.push(e);
        states.push(state);
        let s = c.project(state.position).s;
        let dp = c.progress_unchecked(s_prev, s);
        if lap.is_none() && progress + dp >= length {
            let frac = (length - progress) / dp;
            lap = Some((t + 1, (t as f64 + frac) * dt));
        }
        progress += dp;
        s_prev = s;
        if let Some((steps, _)) = lap {
            if t + 1 >= steps + extra {
                break;
            }
        }
    }
    let (lap_steps, lap_time) =
        lap.ok_or_else(|| Error::ExpertFailed("lap not completed".into()))?;
    Ok(DemoLap {
        states,
        actions,
        executed,
        lap_steps,
        lap_time,
    })
}

impl DemoLap {
    /// The realized lap as a closed reference line with realized speeds.
    pub fn reference(&self) -> Result<ReferenceTrajectory> {
        let mut pts = Vec::with_capacity(self.lap_steps);
        let mut v = Vec::with_capacity(self.lap_steps);
        for st in &self.states[..self.lap_steps] {
            if pts.last().is_some_and(|p: &Vec2| p.distance(st.position) < 1e-6) {
                continue;
            }
            pts.push(st.position);
            v.push(st.speed().max(1e-3));
        }
        ReferenceTrajectory::new(ArcLengthCurve::new(pts, true)?, v)
    }
}

/// Pretraining tuple: observation, expert relative action and the next `H`
/// positions in the car-local frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoSample {
    pub obs: Vec<f64>,
    pub action: [f64; 2],
    pub future: Vec<Vec2>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemoDataset {
    pub samples: Vec<DemoSample>,
}

impl DemoDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Extracts one sample per lap step; each lap is its own reference.
pub fn build_dataset(track: &Track, laps: &[DemoLap], horizon: usize) -> Result<DemoDataset> {
    let mut samples = Vec::new();
    for lap in laps {
        let reference = lap.reference()?;
        for t in 0..lap.lap_steps {
            if t + horizon >= lap.states.len() {
                break;
            }
            let st = &lap.states[t];
            let pose = st.pose();
            samples.push(DemoSample {
                obs: observe(st, track, &reference).to_vec(),
                action: [lap.actions[t].d_alpha, lap.actions[t].d_delta],
                future: (1..=horizon)
                    .map(|k| pose.to_local(lap.states[t + k].position))
                    .collect(),
            });
        }
    }
    Ok(DemoDataset { samples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub n_laps: usize,
    pub noise_scale: f64,
    pub expert: ExpertConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            n_laps: 10,
            noise_scale: 1.0,
            expert: ExpertConfig::default(),
        }
    }
}

/// Drives `n_laps` perturbed expert laps; lap `i` uses a stream derived from
/// `(seed, i)`.
pub fn generate_demos(
    track: &Track,
    env: &EnvConfig,
    cfg: &DemoConfig,
    horizon: usize,
    seed: u64,
) -> Result<Vec<DemoLap>> {
    (0..cfg.n_laps)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let noise = LapNoise::sample(&cfg.expert, cfg.noise_scale, &mut rng);
            let line = racing_line(track, env, &cfg.expert, &noise)?;
            let expert_cfg = ExpertConfig {
                execution_noise: cfg.expert.execution_noise * cfg.noise_scale,
                ..cfg.expert.clone()
            };
            let expert = ScriptedExpert::new(line, expert_cfg, env.clone());
            drive_lap(track, &expert, horizon, &mut rng)
        })
        .collect()
}
