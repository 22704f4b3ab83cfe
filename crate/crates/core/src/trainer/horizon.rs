use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bezier::{evaluate_with, BernsteinTable};
use crate::error::Result;
use crate::nn::DenseNetwork;
use crate::reward::{horizon_progress_from, horizon_style_reward, RewardConfig};

use super::predictor::PredictorHead;
use super::rollout::{mix_seed, RolloutBuffer};

const CHUNK: usize = 256;
const HORIZON_TAG: u64 = 0x4852;

/// Fills `r_p_psi` and `r_s_psi` of every step from the predictor evaluated
/// on the stored latents. Chunk `c` samples from a stream seeded by
/// `(seed, update, c)`.
#[allow(clippy::too_many_arguments)]
pub fn compute_horizon_rewards(
    buf: &mut RolloutBuffer,
    predictor: &DenseNetwork,
    head: PredictorHead,
    latents: &Array2<f64>,
    cfg: &RewardConfig,
    table: &BernsteinTable,
    seed: u64,
    update: u64,
) -> Result<()> {
    let raw = predictor.forward(latents.view())?;
    let n = buf.len();
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let buf_ref = &*buf;
    let values: Vec<Vec<(f64, f64)>> = starts
        .par_iter()
        .enumerate()
        .map(|(c, &start)| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(seed, &[update, c as u64, HORIZON_TAG]));
            (start..(start + CHUNK).min(n))
                .map(|i| {
                    let params = crate::policy::decode_prediction(
                        raw.row(i).as_slice().unwrap(),
                        head.degree,
                        head.position_scale,
                    );
                    let pred = evaluate_with(&params, table);
                    let pose = &buf_ref.poses[i];
                    let tau = buf_ref.references[buf_ref.episode[i]].curve();
                    let s0 = tau.project(pose.position).s;
                    let rp = horizon_progress_from(&pred, pose, s0, tau, cfg.n_mc, &mut rng);
                    let rs = horizon_style_reward(&pred, pose, tau, cfg, &mut rng);
                    (rp, rs)
                })
                .collect()
        })
        .collect();
    for (i, (rp, rs)) in values.into_iter().flatten().enumerate() {
        buf.rewards[i].r_p_psi = rp;
        buf.rewards[i].r_s_psi = rs;
    }
    Ok(())
}

/// Writes `combine(alpha_s)` of each breakdown into `total_rewards`.
pub fn assemble_rewards(buf: &mut RolloutBuffer, alpha_s: f64) {
    for (t, r) in buf.total_rewards.iter_mut().zip(&buf.rewards) {
        *t = r.combine(alpha_s);
    }
}

/// Projected dual step on the style coefficient. With `literal` the sign of
/// the step is reversed.
pub fn update_alpha_s(alpha_s: f64, mean_style: f64, r_hat: f64, lr: f64, literal: bool) -> f64 {
    let violation = r_hat - mean_style;
    let step = if literal { -violation } else { violation };
    (alpha_s + lr * step).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_examples() {
        assert_eq!(update_alpha_s(0.5, 0.009, 0.009, 1e-4, false), 0.5);
        let a = update_alpha_s(0.5, 0.0, 0.009, 1e-4, false);
        assert!((a - 0.5000009).abs() < 1e-15);
        assert_eq!(update_alpha_s(0.0, 1.0, 0.009, 1.0, false), 0.0);
        assert!(update_alpha_s(0.5, 0.0, 0.009, 1e-4, true) < 0.5);
    }
}
