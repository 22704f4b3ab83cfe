//! Planar race-car environment: dynamic bicycle model, relative actions,
//! the 77-value observation and health checks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    boundary_observation, waypoint_observation, Pose, ReferenceTrajectory, Track, Vec2,
};

pub const OBS_DIM: usize = 77;
pub const ACTION_DIM: usize = 2;
const GRAVITY: f64 = 9.81;

pub type Observation = [f64; OBS_DIM];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    pub lf: f64,
    pub lr: f64,
    /// Linear cornering stiffness per axle (N/rad).
    pub cornering_stiffness: f64,
    pub mu: f64,
    pub drive_force: f64,
    pub brake_force: f64,
    /// Fraction of brake force on the front axle.
    pub brake_front_share: f64,
    /// Quadratic drag coefficient (N per (m/s)^2).
    pub drag: f64,
    /// Steering angle at normalized steer 1 (rad).
    pub max_steer: f64,
    /// Lateral tire forces fade in linearly below this speed (m/s).
    pub tire_fade_speed: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass: 800.0,
            yaw_inertia: 1000.0,
            lf: 1.6,
            lr: 1.4,
            cornering_stiffness: 80_000.0,
            mu: 1.5,
            drive_force: 12_000.0,
            brake_force: 20_000.0,
            brake_front_share: 0.6,
            drag: 0.6,
            max_steer: 0.35,
            tire_fade_speed: 2.0,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Static normal loads (front, rear).
    pub fn axle_loads(&self) -> (f64, f64) {
        let w = self.mass * GRAVITY / self.wheelbase();
        (w * self.lr, w * self.lf)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerminationConfig {
    /// Allowed excursion beyond the local half width (m).
    pub off_track_margin: f64,
    /// Heading error against the track tangent that counts as a spin (rad).
    pub spin_heading: f64,
    /// Rear slip angle that counts as a spin (rad).
    pub spin_slip: f64,
    pub slow_speed: f64,
    pub grace_steps: usize,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        TerminationConfig {
            off_track_margin: 0.5,
            spin_heading: std::f64::consts::FRAC_PI_2,
            spin_slip: 30f64.to_radians(),
            slow_speed: 3.0,
            grace_steps: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub vehicle: VehicleParams,
    pub termination: TerminationConfig,
    pub dt: f64,
    /// Integration sub-steps per control step.
    pub substeps: usize,
    /// Per-step bound on each relative action component.
    pub max_increment: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            vehicle: VehicleParams::default(),
            termination: TerminationConfig::default(),
            dt: 0.02,
            substeps: 5,
            max_increment: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec2,
    pub heading: f64,
    pub v_long: f64,
    pub v_lat: f64,
    pub yaw_rate: f64,
    pub a_long: f64,
    pub a_lat: f64,
    pub slip_angle_front: f64,
    pub slip_angle_rear: f64,
    pub slip_ratio_front: f64,
    pub slip_ratio_rear: f64,
    /// Absolute (throttle/brake, steer) in [-1, 1].
    pub current_action: [f64; 2],
}

impl VehicleState {
    pub fn pose(&self) -> Pose {
        Pose {
            position: self.position,
            heading: self.heading,
        }
    }

    pub fn speed(&self) -> f64 {
        self.v_long.hypot(self.v_lat)
    }

    pub fn kinetic_energy(&self, p: &VehicleParams) -> f64 {
        0.5 * p.mass * (self.v_long * self.v_long + self.v_lat * self.v_lat)
            + 0.5 * p.yaw_inertia * self.yaw_rate * self.yaw_rate
    }

    pub fn is_finite(&self) -> bool {
        [
            self.position.x,
            self.position.y,
            self.heading,
            self.v_long,
            self.v_lat,
            self.yaw_rate,
            self.a_long,
            self.a_lat,
            self.slip_angle_front,
            self.slip_angle_rear,
            self.slip_ratio_front,
            self.slip_ratio_rear,
            self.current_action[0],
            self.current_action[1],
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelativeAction {
    pub d_alpha: f64,
    pub d_delta: f64,
}

impl RelativeAction {
    pub fn new(d_alpha: f64, d_delta: f64) -> Self {
        RelativeAction { d_alpha, d_delta }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    None,
    OffTrack,
    Spin,
    Slow,
}

impl Termination {
    pub fn is_terminal(self) -> bool {
        self != Termination::None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: VehicleState,
    pub terminated: Termination,
    pub dt: f64,
}

/// `clip(previous + delta, -1, 1)` per component.
pub fn apply_action(state: &VehicleState, delta: RelativeAction) -> [f64; 2] {
    [
        (state.current_action[0] + delta.d_alpha).clamp(-1.0, 1.0),
        (state.current_action[1] + delta.d_delta).clamp(-1.0, 1.0),
    ]
}

/// Bounds each increment to `[-max, max]`; non-finite increments count as zero.
pub fn clip_increment(delta: RelativeAction, max: f64) -> RelativeAction {
    let c = |v: f64| if v.is_finite() { v.clamp(-max, max) } else { 0.0 };
    RelativeAction::new(c(delta.d_alpha), c(delta.d_delta))
}

struct AxleForces {
    fx: f64,
    fy: f64,
    mz: f64,
    slip_front: f64,
    slip_rear: f64,
    ratio_front: f64,
    ratio_rear: f64,
}

fn forces(p: &VehicleParams, vx: f64, vy: f64, r: f64, action: [f64; 2]) -> AxleForces {
    let steer = action[1] * p.max_steer;
    let vx_eff = vx.abs().max(1.0);
    let slip_front = (vy + p.lf * r).atan2(vx_eff) - steer;
    let slip_rear = (vy - p.lr * r).atan2(vx_eff);
    let (fz_f, fz_r) = p.axle_loads();
    let (lim_f, lim_r) = (p.mu * fz_f, p.mu * fz_r);

    let throttle = action[0];
    let (cmd_f, cmd_r) = if throttle >= 0.0 {
        (0.0, throttle * p.drive_force)
    } else {
        let b = throttle * p.brake_force;
        (b * p.brake_front_share, b * (1.0 - p.brake_front_share))
    };
    let (mut fx_f, mut fx_r) = (cmd_f.clamp(-lim_f, lim_f), cmd_r.clamp(-lim_r, lim_r));
    if throttle < 0.0 && vx <= 0.0 {
        fx_f = 0.0;
        fx_r = 0.0;
    }

    let speed = vx.hypot(vy);
    let fade = (speed / p.tire_fade_speed).min(1.0);
    let fy_lim_f = (lim_f * lim_f - fx_f * fx_f).max(0.0).sqrt();
    let fy_lim_r = (lim_r * lim_r - fx_r * fx_r).max(0.0).sqrt();
    let fy_f = (-p.cornering_stiffness * slip_front).clamp(-fy_lim_f, fy_lim_f) * fade;
    let fy_r = (-p.cornering_stiffness * slip_rear).clamp(-fy_lim_r, fy_lim_r) * fade;

    let (sd, cd) = steer.sin_cos();
    let front_x = fx_f * cd - fy_f * sd;
    let front_y = fx_f * sd + fy_f * cd;
    AxleForces {
        fx: front_x + fx_r - p.drag * speed * vx,
        fy: front_y + fy_r - p.drag * speed * vy,
        mz: p.lf * front_y - p.lr * fy_r,
        slip_front,
        slip_rear,
        ratio_front: cmd_f / lim_f,
        ratio_rear: cmd_r / lim_r,
    }
}

/// Advances the vehicle by `dt` under a fixed absolute action using
/// semi-implicit Euler sub-steps.
pub fn integrate(
    p: &VehicleParams,
    state: &VehicleState,
    action: [f64; 2],
    dt: f64,
    substeps: usize,
) -> Result<VehicleState> {
    let n = substeps.max(1);
    let h = dt / n as f64;
    let mut s = *state;
    s.current_action = action;
    let (mut sum_ax, mut sum_ay) = (0.0, 0.0);
    for _ in 0..n {
        let f = forces(p, s.v_long, s.v_lat, s.yaw_rate, action);
        let ax = f.fx / p.mass;
        let ay = f.fy / p.mass;
        sum_ax += ax;
        sum_ay += ay;
        // body-frame rotation of the velocity vector, applied exactly
        let (sr, cr) = (s.yaw_rate * h).sin_cos();
        let vx_rot = s.v_long * cr + s.v_lat * sr;
        let vy_rot = -s.v_long * sr + s.v_lat * cr;
        let mut vx = vx_rot + ax * h;
        let vy = vy_rot + ay * h;
        if action[0] < 0.0 && s.v_long >= 0.0 && vx < 0.0 {
            vx = 0.0;
        }
        s.v_long = vx;
        s.v_lat = vy;
        s.yaw_rate += f.mz / p.yaw_inertia * h;
        s.heading += s.yaw_rate * h;
        let (sh, ch) = s.heading.sin_cos();
        s.position += Vec2::new(vx * ch - vy * sh, vx * sh + vy * ch) * h;
    }
    let f = forces(p, s.v_long, s.v_lat, s.yaw_rate, action);
    s.a_long = sum_ax / n as f64;
    s.a_lat = sum_ay / n as f64;
    s.slip_angle_front = f.slip_front;
    s.slip_angle_rear = f.slip_rear;
    s.slip_ratio_front = f.ratio_front;
    s.slip_ratio_rear = f.ratio_rear;
    if !s.is_finite() || s.speed() > 150.0 || s.yaw_rate.abs() > 50.0 {
        return Err(Error::NumericalBlowup(format!(
            "vehicle state out of bounds: speed {:.3e}, yaw rate {:.3e}",
            s.speed(),
            s.yaw_rate
        )));
    }
    Ok(s)
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r <= -std::f64::consts::PI {
        r + two_pi
    } else {
        r
    }
}

/// Health checks in order off-track, spin, slow.
pub fn check_termination(
    cfg: &TerminationConfig,
    state: &VehicleState,
    track: &Track,
    steps_elapsed: usize,
) -> Termination {
    let proj = track.centerline().project(state.position);
    let (hl, hr) = track.half_widths_at(proj.s);
    let half = if proj.lateral >= 0.0 { hl } else { hr };
    if proj.lateral.abs() > half + cfg.off_track_margin {
        return Termination::OffTrack;
    }
    let tangent = track.centerline().tangent_at(proj.s).angle();
    if wrap_angle(state.heading - tangent).abs() > cfg.spin_heading
        || state.slip_angle_rear.abs() > cfg.spin_slip
    {
        return Termination::Spin;
    }
    if steps_elapsed >= cfg.grace_steps && state.speed() < cfg.slow_speed {
        return Termination::Slow;
    }
    Termination::None
}

/// One control step: clip the increment, update the absolute action,
/// integrate and run the health checks. `steps_elapsed` counts steps
/// completed after this one.
pub fn step(
    cfg: &EnvConfig,
    state: &VehicleState,
    delta: RelativeAction,
    track: &Track,
    steps_elapsed: usize,
) -> Result<StepOutcome> {
    let delta = clip_increment(delta, cfg.max_increment);
    let action = apply_action(state, delta);
    let next = integrate(&cfg.vehicle, state, action, cfg.dt, cfg.substeps)?;
    let terminated = check_termination(&cfg.termination, &next, track, steps_elapsed);
    Ok(StepOutcome {
        next_state: next,
        terminated,
        dt: cfg.dt,
    })
}

const SCALE_VELOCITY: f64 = 50.0;
const SCALE_ACCEL: f64 = 20.0;
const SCALE_ANGLE: f64 = 0.5;
const SCALE_RATIO: f64 = 1.0;
const SCALE_POSITION: f64 = 100.0;

/// Vehicle block (7), boundary block (28), waypoint block (40), action block (2).
pub fn observe(state: &VehicleState, track: &Track, reference: &ReferenceTrajectory) -> Observation {
    let mut obs = [0.0; OBS_DIM];
    obs[0] = state.speed() / SCALE_VELOCITY;
    obs[1] = state.a_long / SCALE_ACCEL;
    obs[2] = state.a_lat / SCALE_ACCEL;
    obs[3] = state.slip_ratio_front / SCALE_RATIO;
    obs[4] = state.slip_ratio_rear / SCALE_RATIO;
    obs[5] = state.slip_angle_front / SCALE_ANGLE;
    obs[6] = state.slip_angle_rear / SCALE_ANGLE;
    let pose = state.pose();
    for (o, b) in obs[7..35].iter_mut().zip(boundary_observation(track, &pose)) {
        *o = b / SCALE_POSITION;
    }
    for (o, w) in obs[35..75].iter_mut().zip(waypoint_observation(reference, &pose)) {
        *o = w / SCALE_POSITION;
    }
    obs[75] = state.current_action[0];
    obs[76] = state.current_action[1];
    obs
}

/// Car at the start of `reference`, aligned with it, at the reference speed.
pub fn spawn(reference: &ReferenceTrajectory) -> VehicleState {
    let curve = reference.curve();
    VehicleState {
        position: curve.point_at(0.0),
        heading: curve.tangent_at(0.0).angle(),
        v_long: reference.speed_at(0.0),
        ..Default::default()
    }
}

/// Stateful wrapper owning one episode.
#[derive(Clone, Debug)]
pub struct RaceEnv {
    cfg: EnvConfig,
    track: Arc<Track>,
    reference: Arc<ReferenceTrajectory>,
    state: VehicleState,
    steps: usize,
}

impl RaceEnv {
    pub fn new(cfg: EnvConfig, track: Arc<Track>, reference: Arc<ReferenceTrajectory>) -> Self {
        let state = spawn(&reference);
        RaceEnv {
            cfg,
            track,
            reference,
            state,
            steps: 0,
        }
    }

    pub fn reset(&mut self, reference: Arc<ReferenceTrajectory>) {
        self.state = spawn(&reference);
        self.reference = reference;
        self.steps = 0;
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn track(&self) -> &Arc<Track> {
        &self.track
    }

    pub fn reference(&self) -> &Arc<ReferenceTrajectory> {
        &self.reference
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn observe(&self) -> Observation {
        observe(&self.state, &self.track, &self.reference)
    }

    pub fn step(&mut self, delta: RelativeAction) -> Result<StepOutcome> {
        let out = step(&self.cfg, &self.state, delta, &self.track, self.steps + 1)?;
        self.state = out.next_state;
        self.steps += 1;
        Ok(out)
    }
}
