// Steps the vehicle model with the scripted expert and inspects the
// observation vector and termination checks.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbrl::env::{EnvConfig, RaceEnv, RelativeAction, OBS_DIM};
use sbrl::expert::{racing_line, ExpertConfig, LapNoise, ScriptedExpert};
use sbrl::tracks::oval_track;

pub struct DriveSummary {
    pub steps: usize,
    pub progress: f64,
    pub top_speed: f64,
    pub crashed_when_steering_hard: bool,
}

pub fn run_example() -> sbrl::Result<DriveSummary> {
    let track = Arc::new(oval_track(174.34, 40.0, 6.0, 1.0)?);
    let env_cfg = EnvConfig::default();
    let cfg = ExpertConfig::default();
    let noise = LapNoise::sample(&cfg, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
    let line = racing_line(&track, &env_cfg, &cfg, &noise)?;
    let expert = ScriptedExpert::new(line.clone(), cfg, env_cfg.clone());
    let mut env = RaceEnv::new(env_cfg.clone(), track.clone(), Arc::new(line.reference.clone()));

    let obs = env.observe();
    println!("observation has {} entries (expected {OBS_DIM}); first seven: {:.3?}", obs.len(), &obs[..7]);

    let c = track.centerline();
    let mut s = c.project(env.state().position).s;
    let (mut progress, mut top_speed) = (0.0, 0.0f64);
    for _ in 0..750 {
        let out = env.step(expert.act(env.state()))?;
        let next = c.project(out.next_state.position).s;
        progress += c.progress_unchecked(s, next);
        s = next;
        top_speed = top_speed.max(out.next_state.speed());
        if out.terminated.is_terminal() {
            println!("terminated: {:?}", out.terminated);
            break;
        }
    }
    println!("{} steps ({:.1} s): {progress:.1} m of centerline progress, top speed {top_speed:.1} m/s", env.steps(), env.steps() as f64 * env_cfg.dt);

    let mut wild = RaceEnv::new(env_cfg, track, Arc::new(line.reference));
    let mut crashed = false;
    for _ in 0..1500 {
        let out = wild.step(RelativeAction::new(0.1, 0.1))?;
        if out.terminated.is_terminal() {
            println!("full throttle and full lock ends with {:?} after {} steps", out.terminated, wild.steps());
            crashed = true;
            break;
        }
    }
    Ok(DriveSummary { steps: env.steps(), progress, top_speed, crashed_when_steering_hard: crashed })
}

fn main() -> sbrl::Result<()> {
    run_example().map(|_| ())
}
