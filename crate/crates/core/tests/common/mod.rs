//! Oracle checks shared by the integration suites and the acceptance harness.
//! Each check returns a one-line summary on success and the first violation
//! otherwise.
#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sbrl::bezier::{
    bernstein, evaluate, evaluate_with, marginal_at, recency_weights, step_log_likelihood,
    weighted_ll_and_grad, BernsteinTable, BezierParams, BezierPrediction,
};
use sbrl::env::{EnvConfig, OBS_DIM};
use sbrl::eval::{mean_reference_offset, pareto_front, LapTimer, ParetoPoint};
use sbrl::experiment::{run_seed, ExperimentConfig, CHECKPOINT_FILE, LAPS_FILE, METRICS_FILE};
use sbrl::expert::{generate_demos, DemoConfig, DemoDataset, DemoSample};
use sbrl::geometry::{ArcLengthCurve, Vec2};
use sbrl::nn::{gaussian_log_prob, Activation, Adam, DenseNetwork};
use sbrl::policy::{NetworkConfig, PolicyBundle};
use sbrl::reward::{horizon_progress_from, progress_reward};
use sbrl::tracks::oval_track;
use sbrl::trainer::gae::gae;
use sbrl::trainer::ppo::{ppo_loss_and_grad, Minibatch, PpoLossConfig};
use sbrl::trainer::predictor::mean_log_likelihood;
use sbrl::trainer::pretrain::pretrain_loss_and_grad;
use sbrl::trainer::{update_predictor, MetricsRow, PredictorConfig, PredictorHead, PretrainConfig};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_params(rng: &mut impl Rng, degree: usize, log_std: (f64, f64)) -> BezierParams {
    BezierParams {
        mu: (0..degree)
            .map(|_| Vec2::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)))
            .collect(),
        log_std: (0..degree)
            .map(|_| [rng.gen_range(log_std.0..log_std.1), rng.gen_range(log_std.0..log_std.1)])
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Mathematical invariants

pub fn bernstein_partition() -> Check {
    let mut worst: f64 = 0.0;
    for m in 0..=10 {
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            let sum: f64 = (0..=m).map(|i| bernstein(i, m, t).unwrap()).sum();
            worst = worst.max((sum - 1.0).abs());
        }
    }
    ensure!(worst <= 1e-12, "Bernstein sum deviates from 1 by {worst:e}");
    Ok(format!("partition of unity max error {worst:.1e}"))
}

pub fn bezier_endpoints(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for _ in 0..cases {
        let m = r.gen_range(1..=8);
        let p = random_params(&mut r, m, (-2.0, 1.0));
        let pred = evaluate(&p, r.gen_range(1..=120));
        let last = pred.horizon() - 1;
        ensure!(pred.means[last] == p.mu[m - 1], "endpoint mean {:?} != {:?}", pred.means[last], p.mu[m - 1]);
        let want = [p.std(m - 1, 0).powi(2), p.std(m - 1, 1).powi(2)];
        ensure!(pred.variances[last] == want, "endpoint variance {:?} != {want:?}", pred.variances[last]);
        let (m0, v0) = marginal_at(&p, 0.0);
        ensure!(m0 == Vec2::ZERO && v0 == [0.0, 0.0], "t = 0 is not the origin with zero covariance");
    }
    Ok(format!("{cases} endpoint cases exact"))
}

fn convex_hull(mut pts: Vec<Vec2>) -> Vec<Vec2> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let mut hull: Vec<Vec2> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if (b - a).cross(p - a) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn inside_hull(hull: &[Vec2], p: Vec2, tol: f64) -> bool {
    (0..hull.len()).all(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        (b - a).cross(p - a) >= -tol
    })
}

pub fn bezier_convex_hull(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for c in 0..cases {
        let m = r.gen_range(2..=8);
        let p = random_params(&mut r, m, (-2.0, 1.0));
        let mut pts = p.mu.clone();
        pts.push(Vec2::ZERO);
        let hull = convex_hull(pts);
        let t: f64 = r.gen_range(0.0..=1.0);
        let (mean, _) = marginal_at(&p, t);
        ensure!(inside_hull(&hull, mean, 1e-9), "case {c}: mean {mean:?} at t = {t} outside the hull");
    }
    Ok(format!("{cases} hull-membership cases"))
}

pub fn covariance_non_negative(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for _ in 0..cases {
        let m = r.gen_range(1..=8);
        let p = random_params(&mut r, m, (-12.0, 3.0));
        for k in 0..=50 {
            let (_, v) = marginal_at(&p, k as f64 / 50.0);
            ensure!(v[0] >= 0.0 && v[1] >= 0.0, "negative variance {v:?}");
        }
        let pred = evaluate(&p, 40);
        ensure!(
            pred.variances.iter().all(|v| v[0] > 0.0 && v[1] > 0.0),
            "evaluated variance not positive"
        );
    }
    Ok(format!("{cases} covariance cases non-negative"))
}

fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

pub fn gaussian_normalization() -> Check {
    let mut worst: f64 = 0.0;
    for &(m, ls) in &[(0.0, 0.0), (1.3, -2.0), (-4.0, 1.5), (0.2, -6.0), (7.0, 2.0)] {
        let s = f64::exp(ls);
        let z = trapezoid(|x| gaussian_log_prob(&[m], &[ls], &[x]).exp(), m - 12.0 * s, m + 12.0 * s, 20_000);
        worst = worst.max((z - 1.0).abs());
    }
    let cases: [(Vec2, [f64; 2]); 2] = [(Vec2::new(0.5, -1.0), [0.04, 2.5]), (Vec2::new(-3.0, 2.0), [1.0, 1e-3])];
    for &(mean, var) in &cases {
        let (sx, sy) = (var[0].sqrt(), var[1].sqrt());
        let n = 1200;
        let z = trapezoid(
            |x| {
                trapezoid(
                    |y| step_log_likelihood(mean, var, Vec2::new(x, y)).unwrap().exp(),
                    mean.y - 10.0 * sy,
                    mean.y + 10.0 * sy,
                    n,
                )
            },
            mean.x - 10.0 * sx,
            mean.x + 10.0 * sx,
            n,
        );
        worst = worst.max((z - 1.0).abs());
    }
    ensure!(worst <= 1e-6, "log-density integrates to 1 +- {worst:e}");
    Ok(format!("densities integrate to 1 within {worst:.1e}"))
}

pub fn random_polyline(r: &mut impl Rng) -> ArcLengthCurve {
    loop {
        let n = r.gen_range(3..=7);
        let pts: Vec<Vec2> = (0..n)
            .map(|_| Vec2::new(r.gen_range(0.0..5.0), r.gen_range(0.0..5.0)))
            .collect();
        if let Ok(c) = ArcLengthCurve::new(pts, r.gen_bool(0.5)) {
            return c;
        }
    }
}

fn dense_distance(curve: &ArcLengthCurve, p: Vec2, resolution: f64) -> f64 {
    let pts = curve.points();
    let n = pts.len();
    let segs = if curve.is_closed() { n } else { n - 1 };
    let mut best = f64::INFINITY;
    for i in 0..segs {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let k = ((b - a).norm() / resolution).ceil().max(1.0) as usize;
        for j in 0..=k {
            let q = a + (b - a) * (j as f64 / k as f64);
            best = best.min((p - q).norm_sq());
        }
    }
    best.sqrt()
}

pub fn projection_optimality(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    for c in 0..cases {
        let curve = random_polyline(&mut r);
        let p = Vec2::new(r.gen_range(-2.0..7.0), r.gen_range(-2.0..7.0));
        let proj = curve.project(p);
        let d = (p - proj.foot).norm();
        let oracle = dense_distance(&curve, p, 1e-4);
        worst = worst.max(d - oracle);
        ensure!(d <= oracle + 1e-6, "case {c}: projection {d} exceeds dense oracle {oracle}");
        ensure!((proj.foot - curve.point_at(proj.s)).norm() < 1e-9, "case {c}: foot inconsistent with s");
    }
    Ok(format!("{cases} projection cases, max excess {worst:.1e} m"))
}

pub fn gae_brute_force(
    rewards: &[f64],
    values: &[f64],
    end: &[bool],
    bootstrap: &[f64],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut coef = 1.0;
            for l in t..n {
                let stop = end[l] || l + 1 == n;
                let next = if stop { bootstrap[l] } else { values[l + 1] };
                total += coef * (rewards[l] + gamma * next - values[l]);
                if stop {
                    break;
                }
                coef *= gamma * lambda;
            }
            total
        })
        .collect()
}

pub fn gae_matches_brute_force(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = 100;
        let rewards: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let values: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let end: Vec<bool> = (0..n).map(|_| r.gen_bool(0.05)).collect();
        let bootstrap: Vec<f64> = (0..n)
            .map(|t| if (end[t] || t + 1 == n) && r.gen_bool(0.5) { normal(&mut r) } else { 0.0 })
            .collect();
        let gamma = r.gen_range(0.9..1.0);
        let lambda = r.gen_range(0.0..=1.0);
        let (adv, ret) = gae(&rewards, &values, &end, &bootstrap, gamma, lambda);
        let want = gae_brute_force(&rewards, &values, &end, &bootstrap, gamma, lambda);
        for t in 0..n {
            worst = worst.max((adv[t] - want[t]).abs());
            ensure!((ret[t] - adv[t] - values[t]).abs() < 1e-12, "returns != advantages + values");
        }
    }
    ensure!(worst <= 1e-10, "GAE deviates from brute force by {worst:e}");
    Ok(format!("{cases} buffers, max deviation {worst:.1e}"))
}

pub fn pareto_oracle(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut out: Vec<ParetoPoint> = Vec::new();
    for p in points {
        let dominated = points.iter().any(|q| {
            q != p && q.lap_time <= p.lap_time && q.mro <= p.mro
        });
        if !dominated && !out.contains(p) {
            out.push(*p);
        }
    }
    out.sort_by(|a, b| a.lap_time.total_cmp(&b.lap_time).then(a.mro.total_cmp(&b.mro)));
    out
}

pub fn random_points(r: &mut impl Rng) -> Vec<ParetoPoint> {
    let n = r.gen_range(1..60);
    let grid = r.gen_bool(0.5);
    (0..n)
        .map(|_| {
            if grid {
                ParetoPoint {
                    lap_time: 60.0 + r.gen_range(0..8) as f64,
                    mro: 0.1 * r.gen_range(0..8) as f64,
                }
            } else {
                ParetoPoint {
                    lap_time: r.gen_range(60.0..80.0),
                    mro: r.gen_range(0.0..2.0),
                }
            }
        })
        .collect()
}

pub fn pareto_matches_oracle(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for c in 0..cases {
        let pts = random_points(&mut r);
        let got = pareto_front(&pts);
        let want = pareto_oracle(&pts);
        ensure!(got == want, "case {c}: front {got:?} != oracle {want:?}");
    }
    Ok(format!("{cases} point sets match the quadratic oracle"))
}

/// Every invariant of the mathematical suite.
pub fn invariant_suite() -> Check {
    let parts = [
        bernstein_partition()?,
        bezier_endpoints(500, 11)?,
        bezier_convex_hull(1000, 12)?,
        covariance_non_negative(500, 13)?,
        gaussian_normalization()?,
        projection_optimality(1000, 14)?,
        gae_matches_brute_force(1000, 15)?,
        pareto_matches_oracle(1000, 16)?,
    ];
    Ok(parts.join("; "))
}

// ---------------------------------------------------------------------------
// Gradient fidelity

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of `f`
/// over the coordinates `idx`.
pub fn fd_error(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], idx: &[usize]) -> f64 {
    let mut y = x.to_vec();
    let mut worst: f64 = 0.0;
    for &i in idx {
        y[i] = x[i] + FD_STEP;
        let up = f(&y);
        y[i] = x[i] - FD_STEP;
        let down = f(&y);
        y[i] = x[i];
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

pub fn grad_network_config() -> NetworkConfig {
    NetworkConfig {
        extractor: vec![32, 32],
        policy: vec![32, 32],
        value: vec![32, 32],
        predictor: vec![32, 32],
        degree: 5,
        initial_std: 0.3,
        policy_output_gain: 1.0,
        position_scale: 20.0,
    }
}

/// A [32, 32] bundle with every parameter jittered off its initialization.
pub fn grad_bundle(seed: u64) -> PolicyBundle {
    let mut r = rng(seed);
    let mut b = PolicyBundle::new(&grad_network_config(), &mut r);
    let mut p = b.params_flat();
    for v in p.iter_mut() {
        *v += 0.05 * normal(&mut r);
    }
    b.set_params_flat(&p).unwrap();
    b
}

/// Coordinates to probe: a random sample from every component plus all of `log_std`.
pub fn probe_indices(bundle: &PolicyBundle, per_part: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    let l = bundle.layout();
    let mut idx = Vec::new();
    for range in [l.extractor, l.policy, l.value, l.predictor] {
        for _ in 0..per_part {
            idx.push(r.gen_range(range.clone()));
        }
    }
    idx.extend(l.log_std);
    idx
}

pub fn smooth_future(r: &mut impl Rng, horizon: usize) -> Vec<Vec2> {
    let (v, curv) = (r.gen_range(0.1..0.6), r.gen_range(-0.01..0.01));
    (1..=horizon)
        .map(|i| {
            let i = i as f64;
            Vec2::new(v * i + 0.05 * normal(r), curv * i * i + 0.05 * normal(r))
        })
        .collect()
}

pub const GRAD_HORIZON: usize = 20;

pub fn grad_minibatch(bundle: &PolicyBundle, n: usize, seed: u64) -> Minibatch {
    let mut r = rng(seed);
    let obs = Array2::from_shape_fn((n, OBS_DIM), |_| normal(&mut r));
    let fwd = bundle.forward_train(obs.view()).unwrap();
    let mut actions = Vec::new();
    let mut old = Vec::new();
    for i in 0..n {
        let mean = [fwd.mean[(i, 0)], fwd.mean[(i, 1)]];
        let a = [mean[0] + 0.3 * normal(&mut r), mean[1] + 0.3 * normal(&mut r)];
        old.push(gaussian_log_prob(&mean, &bundle.log_std, &a) + r.gen_range(-0.4..0.4));
        actions.push(a);
    }
    Minibatch {
        obs,
        actions,
        old_log_probs: old,
        advantages: (0..n).map(|_| normal(&mut r)).collect(),
        returns: (0..n).map(|_| normal(&mut r)).collect(),
        futures: (0..n)
            .map(|i| (i % 4 != 3).then(|| smooth_future(&mut r, GRAD_HORIZON)))
            .collect(),
    }
}

/// Central-difference check of one PPO loss head; returns the worst relative error.
pub fn ppo_head_error(cfg: PpoLossConfig, zero_advantages: bool, seed: u64) -> f64 {
    let bundle = grad_bundle(seed);
    let mut mb = grad_minibatch(&bundle, 16, seed + 1);
    if zero_advantages {
        mb.advantages.iter_mut().for_each(|a| *a = 0.0);
    }
    let table = BernsteinTable::new(bundle.degree, GRAD_HORIZON);
    let weights = recency_weights(GRAD_HORIZON, 0.97);
    let (_, grad) = ppo_loss_and_grad(&bundle, &mb, &cfg, &table, &weights).unwrap();
    let x = bundle.params_flat();
    let idx = probe_indices(&bundle, 60, seed + 2);
    let mut probe = bundle.clone();
    fd_error(
        |p| {
            probe.set_params_flat(p).unwrap();
            ppo_loss_and_grad(&probe, &mb, &cfg, &table, &weights).unwrap().0.loss
        },
        &x,
        &grad,
        &idx,
    )
}

pub fn surrogate_config() -> PpoLossConfig {
    PpoLossConfig { clip_range: 0.2, ent_coef: 0.0, vf_coef: 0.0, psi_coef: 0.0 }
}

pub fn value_config() -> PpoLossConfig {
    PpoLossConfig { clip_range: 0.2, ent_coef: 0.0, vf_coef: 1.0, psi_coef: 0.0 }
}

pub fn entropy_config() -> PpoLossConfig {
    PpoLossConfig { clip_range: 0.2, ent_coef: 1.0, vf_coef: 0.0, psi_coef: 0.0 }
}

pub fn predictor_config_only() -> PpoLossConfig {
    PpoLossConfig { clip_range: 0.2, ent_coef: 0.0, vf_coef: 0.0, psi_coef: 1.0 }
}

pub fn bezier_param_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let p = random_params(&mut r, 5, (-1.0, 1.0));
    let p = BezierParams { mu: p.mu.iter().map(|&m| m * 0.1).collect(), ..p };
    let target = smooth_future(&mut r, GRAD_HORIZON);
    let table = BernsteinTable::new(5, GRAD_HORIZON);
    let weights = recency_weights(GRAD_HORIZON, 0.95);
    let (_, g) = weighted_ll_and_grad(&p, &table, &target, &weights);
    let flat = |p: &BezierParams| -> Vec<f64> {
        p.mu.iter().flat_map(|m| [m.x, m.y]).chain(p.log_std.iter().flat_map(|l| *l)).collect()
    };
    let unflat = |x: &[f64]| BezierParams {
        mu: (0..5).map(|k| Vec2::new(x[2 * k], x[2 * k + 1])).collect(),
        log_std: (0..5).map(|k| [x[10 + 2 * k], x[11 + 2 * k]]).collect(),
    };
    let x = flat(&p);
    let analytic = flat(&BezierParams { mu: g.mu, log_std: g.log_std });
    let idx: Vec<usize> = (0..x.len()).collect();
    fd_error(
        |x| weighted_ll_and_grad(&unflat(x), &table, &target, &weights).0,
        &x,
        &analytic,
        &idx,
    )
}

pub fn demo_dataset(n: usize, seed: u64) -> DemoDataset {
    let mut r = rng(seed);
    DemoDataset {
        samples: (0..n)
            .map(|_| DemoSample {
                obs: (0..OBS_DIM).map(|_| normal(&mut r)).collect(),
                action: [0.05 * normal(&mut r), 0.05 * normal(&mut r)],
                future: smooth_future(&mut r, GRAD_HORIZON),
            })
            .collect(),
    }
}

pub fn pretrain_error(alpha_psi_pt: f64, seed: u64) -> f64 {
    let bundle = grad_bundle(seed);
    let data = demo_dataset(16, seed + 1);
    let cfg = PretrainConfig { alpha_reg: 0.7, alpha_psi_pt, ..PretrainConfig::default() };
    let table = BernsteinTable::new(bundle.degree, GRAD_HORIZON);
    let weights = recency_weights(GRAD_HORIZON, 1.0);
    let idx: Vec<usize> = (0..data.len()).collect();
    let (_, grad) = pretrain_loss_and_grad(&bundle, &data, &idx, &cfg, &table, &weights).unwrap();
    let x = bundle.params_flat();
    let probe_idx = probe_indices(&bundle, 60, seed + 2);
    let mut probe = bundle.clone();
    fd_error(
        |p| {
            probe.set_params_flat(p).unwrap();
            pretrain_loss_and_grad(&probe, &data, &idx, &cfg, &table, &weights).unwrap().0.loss
        },
        &x,
        &grad,
        &probe_idx,
    )
}

pub fn gradient_suite() -> Check {
    let heads: [(&str, f64); 7] = [
        ("surrogate", ppo_head_error(surrogate_config(), false, 100)),
        ("value", ppo_head_error(value_config(), true, 200)),
        ("entropy", ppo_head_error(entropy_config(), true, 300)),
        ("predictor", ppo_head_error(predictor_config_only(), true, 400)),
        ("bezier params", bezier_param_error(500)),
        ("behavior cloning", pretrain_error(0.0, 600)),
        ("pretrain with predictor", pretrain_error(0.5, 700)),
    ];
    for (name, e) in heads {
        ensure!(e < FD_TOLERANCE, "{name} gradient relative error {e:e}");
    }
    let worst = heads.iter().map(|h| h.1).fold(0.0, f64::max);
    Ok(format!("{} loss heads, worst relative error {worst:.1e}", heads.len()))
}

// ---------------------------------------------------------------------------
// Predictor recoverability

pub const RECOVER_INPUT: usize = 16;
pub const RECOVER_HORIZON: usize = 30;

pub struct Recovery {
    pub student_ll: f64,
    pub truth_ll: f64,
    pub steps: usize,
}

fn teacher(seed: u64) -> DenseNetwork {
    let mut r = rng(seed);
    let mut net = DenseNetwork::orthogonal(&[RECOVER_INPUT, 32, 32, 20], Activation::Identity, 0.3, &mut r);
    let n = net.n_params();
    // unit-std futures: zero log-std biases
    for k in 0..10 {
        net.params_mut()[n - 10 + k] = 0.0;
    }
    net
}

fn synthesize(net: &DenseNetwork, head: PredictorHead, n: usize, r: &mut impl Rng) -> (Array2<f64>, Vec<Vec<Vec2>>) {
    let inputs = Array2::from_shape_fn((n, RECOVER_INPUT), |_| normal(r));
    let raw = net.forward(inputs.view()).unwrap();
    let table = BernsteinTable::new(head.degree, RECOVER_HORIZON);
    let targets = (0..n)
        .map(|i| {
            let p = sbrl::policy::decode_prediction(raw.row(i).as_slice().unwrap(), head.degree, head.position_scale);
            let pred: BezierPrediction = evaluate_with(&p, &table);
            pred.means
                .iter()
                .zip(&pred.variances)
                .map(|(m, v)| Vec2::new(m.x + v[0].sqrt() * normal(r), m.y + v[1].sqrt() * normal(r)))
                .collect()
        })
        .collect();
    (inputs, targets)
}

/// Fits a fresh predictor to futures sampled from a known network and
/// compares held-out likelihoods. With `shuffle` the training targets are
/// permuted across inputs.
pub fn predictor_recovery(shuffle: bool, seed: u64) -> Recovery {
    let head = PredictorHead { degree: 5, position_scale: 20.0 };
    let truth = teacher(seed);
    let mut r = rng(seed + 1);
    let (inputs, mut targets) = synthesize(&truth, head, 6000, &mut r);
    let (test_inputs, test_targets) = synthesize(&truth, head, 2000, &mut r);
    if shuffle {
        use rand::seq::SliceRandom;
        targets.shuffle(&mut r);
    }
    let mut student =
        DenseNetwork::orthogonal(&[RECOVER_INPUT, 32, 32, 20], Activation::Identity, 0.01, &mut rng(seed + 2));
    let cfg = PredictorConfig {
        horizon: RECOVER_HORIZON,
        lambda_psi: 1.0,
        learning_rate: 1e-3,
        batch_size: 128,
        validation_fraction: 0.1,
        eval_every: 100,
        patience: 10,
        max_steps: 40_000,
    };
    let mut opt = Adam::new(student.n_params(), cfg.learning_rate);
    let trace = update_predictor(&mut student, &mut opt, head, &inputs, &targets, &cfg, &mut rng(seed + 3)).unwrap();
    let table = BernsteinTable::new(head.degree, RECOVER_HORIZON);
    let weights = recency_weights(RECOVER_HORIZON, 1.0);
    let refs: Vec<&[Vec2]> = test_targets.iter().map(|t| &t[..]).collect();
    Recovery {
        student_ll: mean_log_likelihood(&student, head, test_inputs.view(), &refs, &table, &weights).unwrap(),
        truth_ll: mean_log_likelihood(&truth, head, test_inputs.view(), &refs, &table, &weights).unwrap(),
        steps: trace.steps,
    }
}

pub fn within_five_percent(rec: &Recovery) -> bool {
    (rec.student_ll - rec.truth_ll).abs() <= 0.05 * rec.truth_ll.abs()
}

pub fn recoverability() -> Check {
    let rec = predictor_recovery(false, 900);
    let gap = (rec.student_ll - rec.truth_ll) / rec.truth_ll.abs();
    ensure!(
        within_five_percent(&rec),
        "held-out log-likelihood {:.4} vs ground truth {:.4} ({:+.1}%)",
        rec.student_ll,
        rec.truth_ll,
        100.0 * gap
    );
    Ok(format!(
        "held-out log-likelihood {:.4} vs ground truth {:.4} ({:+.2}%) after {} steps",
        rec.student_ll, rec.truth_ll, 100.0 * gap, rec.steps
    ))
}

// ---------------------------------------------------------------------------
// Telescoping identity

pub fn telescoping(horizon: usize, stride: usize) -> Check {
    let track = oval_track(174.34, 40.0, 6.0, 1.0).unwrap();
    let env = EnvConfig::default();
    let demos = DemoConfig { n_laps: 1, noise_scale: 0.0, ..DemoConfig::default() };
    let lap = generate_demos(&track, &env, &demos, horizon, 7).unwrap().remove(0);
    let reference = lap.reference().unwrap();
    let tau = reference.curve();
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for t in (0..lap.lap_steps).step_by(stride) {
        let pose = lap.states[t].pose();
        let positions: Vec<Vec2> = lap.states[t..=t + horizon].iter().map(|s| s.position).collect();
        let pred = BezierPrediction {
            means: positions[1..].iter().map(|&p| pose.to_local(p)).collect(),
            variances: vec![[0.0, 0.0]; horizon],
        };
        let s0 = tau.project(pose.position).s;
        let got = horizon_progress_from(&pred, &pose, s0, tau, 8, &mut r);
        let want: f64 = positions.windows(2).map(|w| progress_reward(tau, w[0], w[1])).sum();
        worst = worst.max((got - want).abs());
        n += 1;
    }
    ensure!(worst <= 1e-8, "horizon progress differs from summed step progress by {worst:e}");
    Ok(format!("{n} start states over a full lap, max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Determinism and persistence

/// A configuration that trains for a few small updates in seconds.
pub fn tiny_config(updates: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk();
    c.demos.n_laps = 2;
    c.network.extractor = vec![16, 16];
    c.network.policy = vec![16];
    c.network.value = vec![16];
    c.network.predictor = vec![16];
    c.trainer.ppo.n_step = 64;
    c.trainer.ppo.num_env = 2;
    c.trainer.ppo.batch_size = 32;
    c.trainer.ppo.n_epochs = 2;
    c.trainer.predictor.horizon = 20;
    c.trainer.predictor.max_steps = 20;
    c.trainer.pretrain.epochs = 1;
    c.run.total_steps = updates * 128;
    c.run.checkpoint_every = 1;
    c.run.eval_laps = 2;
    c.run.eval_max_steps = 200;
    c
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn determinism_and_resume(root: &Path) -> Check {
    let run = |cfg: &ExperimentConfig, dir: &str| {
        run_seed(cfg, 3, &root.join(dir)).map_err(|e| format!("run {dir}: {e}"))
    };
    let full = tiny_config(4);
    run(&full, "a")?;
    run(&full, "b")?;
    for f in [METRICS_FILE, LAPS_FILE, CHECKPOINT_FILE] {
        ensure!(read(&root.join("a").join(f))? == read(&root.join("b").join(f))?, "{f} differs between identical runs");
    }
    run(&tiny_config(2), "c")?;
    let resumed = run(&full, "c")?;
    ensure!(resumed.metrics.len() == 4, "resumed run logged {} updates", resumed.metrics.len());
    for f in [METRICS_FILE, LAPS_FILE, CHECKPOINT_FILE] {
        ensure!(read(&root.join("a").join(f))? == read(&root.join("c").join(f))?, "{f} differs after resume");
    }
    Ok("metrics, laps and checkpoints bitwise identical across repeats and a mid-run resume".into())
}

// ---------------------------------------------------------------------------
// MRO

pub fn constant_offset_mro() -> Check {
    let mut worst: f64 = 0.0;
    let corner = ArcLengthCurve::new(
        vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0), Vec2::new(100.0, 80.0), Vec2::new(30.0, 120.0)],
        false,
    )
    .unwrap();
    let hexagon = ArcLengthCurve::new(
        (0..6)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 3.0;
                Vec2::new(50.0 * a.cos(), 50.0 * a.sin())
            })
            .collect(),
        true,
    )
    .unwrap();
    for curve in [&corner, &hexagon] {
        for &d in &[0.0, 0.3, 1.7, 4.0] {
            let pts = curve.points();
            let n = pts.len();
            let segs = if curve.is_closed() { n } else { n - 1 };
            let mut positions = Vec::new();
            for i in 0..segs {
                let (a, b) = (pts[i], pts[(i + 1) % n]);
                let normal = (b - a).normalized().perp_left();
                for k in 1..10 {
                    let base = a + (b - a) * (0.3 + 0.04 * k as f64);
                    let side = if k % 2 == 0 { 1.0 } else { -1.0 };
                    positions.push(base + normal * (side * d));
                }
            }
            let mro = mean_reference_offset(&positions, curve);
            worst = worst.max((mro - d).abs());
            let mut timer = LapTimer::new(1e9);
            for p in &positions {
                timer.advance(1.0, (*p - curve.project(*p).foot).norm(), 0.02);
            }
            worst = worst.max((timer.mean_offset() - d).abs());
        }
    }
    ensure!(worst <= 1e-9, "constant-offset MRO off by {worst:e}");
    Ok(format!("constant offsets recovered within {worst:.1e} m"))
}

// ---------------------------------------------------------------------------
// Long-run criteria

/// Per-update consistency of the style-coefficient drift with the sign of
/// `r_hat - mean r^s`, and whether both directions occur.
pub struct DriftReport {
    pub ups: usize,
    pub downs: usize,
    pub inconsistent: usize,
    pub final_style: f64,
}

pub fn style_drift(rows: &[MetricsRow], alpha_init: f64, r_hat: f64) -> DriftReport {
    let mut prev = alpha_init;
    let (mut ups, mut downs, mut inconsistent) = (0, 0, 0);
    for row in rows {
        let d = row.alpha_s - prev;
        let want = r_hat - row.mean_r_s;
        if d > 0.0 {
            ups += 1;
            if want <= 0.0 {
                inconsistent += 1;
            }
        } else if d < 0.0 {
            downs += 1;
            if want >= 0.0 {
                inconsistent += 1;
            }
        } else if prev > 0.0 && want != 0.0 {
            inconsistent += 1;
        }
        prev = row.alpha_s;
    }
    let tail = &rows[rows.len().saturating_sub(10)..];
    let final_style = tail.iter().map(|r| r.mean_r_s).sum::<f64>() / tail.len().max(1) as f64;
    DriftReport { ups, downs, inconsistent, final_style }
}

pub fn constraint_check(rows: &[MetricsRow], alpha_init: f64, r_hat: f64) -> Check {
    ensure!(rows.len() >= 10, "only {} updates logged", rows.len());
    let d = style_drift(rows, alpha_init, r_hat);
    let rel = (d.final_style - r_hat) / r_hat;
    let summary = format!(
        "final 10-update mean r_s {:.4} vs target {r_hat} ({:+.1}%), alpha drift up {} / down {} / inconsistent {}",
        d.final_style,
        100.0 * rel,
        d.ups,
        d.downs,
        d.inconsistent
    );
    ensure!(rel.abs() <= 0.25, "{summary}");
    ensure!(d.inconsistent == 0 && d.ups > 0 && d.downs > 0, "{summary}");
    Ok(summary)
}

pub fn telescoping_default() -> Check {
    telescoping(100, 7)
}

pub fn reference_fixture() -> Arc<sbrl::geometry::ReferenceTrajectory> {
    let track = oval_track(174.34, 40.0, 6.0, 1.0).unwrap();
    let c = track.centerline().clone();
    let n = c.len();
    Arc::new(sbrl::geometry::ReferenceTrajectory::new(c, vec![15.0; n]).unwrap())
}
