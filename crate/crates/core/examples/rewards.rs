// Step and receding-horizon rewards for a car driving parallel to a
// reference line, and how the style coefficient mixes them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbrl::bezier::BezierPrediction;
use sbrl::geometry::{ArcLengthCurve, Pose, Vec2};
use sbrl::reward::{
    horizon_progress_reward, horizon_style_reward, progress_reward, style_reward, RewardBreakdown, RewardConfig,
};

pub fn run_example() -> sbrl::Result<RewardBreakdown> {
    let tau = ArcLengthCurve::new((0..=60).map(|i| Vec2::new(5.0 * i as f64, 0.0)).collect(), false)?;
    let cfg = RewardConfig::default();
    let (from, to) = (Vec2::new(10.0, 2.0), Vec2::new(10.4, 2.0));
    let r_p = progress_reward(&tau, from, to);
    let r_s = style_reward(&tau, to, cfg.alpha_d);
    println!("step progress {r_p:.3} m, style {r_s:.4} at 2 m offset");

    let horizon = 100;
    let pose = Pose::new(10.4, 2.0, 0.0);
    let pred = BezierPrediction {
        means: (1..=horizon).map(|i| Vec2::new(0.4 * i as f64, -0.015 * i as f64)).collect(),
        variances: (1..=horizon).map(|i| [1e-4 * i as f64, 1e-4 * i as f64]).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r_p_psi = horizon_progress_reward(&pred, &pose, &tau, &cfg, &mut rng);
    let r_s_psi = horizon_style_reward(&pred, &pose, &tau, &cfg, &mut rng);
    println!(
        "horizon progress {r_p_psi:.2} m, horizon style {r_s_psi:.3} (ceiling {:.3})",
        cfg.horizon_style_bound(horizon)
    );

    let b = RewardBreakdown { r_p, r_s, r_p_psi, r_s_psi, penalty: 0.0 };
    for alpha in [0.0, 1.0, 5.0] {
        println!("alpha_s = {alpha}: combined reward {:.3}", b.combine(alpha));
    }
    Ok(b)
}

fn main() -> sbrl::Result<()> {
    run_example().map(|_| ())
}
