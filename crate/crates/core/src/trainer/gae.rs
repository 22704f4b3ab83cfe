use serde::{Deserialize, Serialize};

/// Generalized advantage estimation over one environment's step sequence.
///
/// `episode_end[t]` marks the last step of an episode segment (terminal,
/// truncated or end of buffer). At such a step the next value is
/// `bootstrap[t]`, which must be zero for true terminals.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    episode_end: &[bool],
    bootstrap: &[f64],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if episode_end[t] || t + 1 == n {
            (bootstrap[t], 0.0)
        } else {
            (values[t + 1], next_adv)
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        adv[t] = delta + gamma * lambda * carry;
        next_adv = adv[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit (population) standard deviation.
pub fn normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    if values.is_empty() {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-12);
    for v in values.iter_mut() {
        *v = (*v - mean) / std;
    }
}

/// Running mean and variance with batched parallel-axis updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for RunningMeanStd {
    fn default() -> Self {
        RunningMeanStd {
            mean: 0.0,
            var: 1.0,
            count: 1e-4,
        }
    }
}

impl RunningMeanStd {
    pub fn update(&mut self, batch: &[f64]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let bm = batch.iter().sum::<f64>() / n;
        let bv = batch.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / n;
        let delta = bm - self.mean;
        let total = self.count + n;
        self.mean += delta * n / total;
        let m2 = self.var * self.count + bv * n + delta * delta * self.count * n / total;
        self.var = m2 / total;
        self.count = total;
    }
}

/// Scales rewards by the running standard deviation of the discounted return,
/// processing `rewards[env][t]` in time-major order. `episode_end` resets
/// each environment's return accumulator after the step.
pub fn normalize_rewards(
    rms: &mut RunningMeanStd,
    rewards: &mut [Vec<f64>],
    episode_end: &[Vec<bool>],
    gamma: f64,
    clip: f64,
) {
    let n_env = rewards.len();
    if n_env == 0 {
        return;
    }
    let n_step = rewards[0].len();
    let mut ret = vec![0.0; n_env];
    let mut batch = vec![0.0; n_env];
    for t in 0..n_step {
        for e in 0..n_env {
            ret[e] = ret[e] * gamma + rewards[e][t];
            batch[e] = ret[e];
        }
        rms.update(&batch);
        let scale = (rms.var + 1e-8).sqrt();
        for e in 0..n_env {
            rewards[e][t] = (rewards[e][t] / scale).clamp(-clip, clip);
            if episode_end[e][t] {
                ret[e] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = gae(&[1.0], &[0.0], &[true], &[0.0], 0.99, 0.95);
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn two_step_hand_recursion() {
        let (a, _) = gae(&[1.0, 1.0], &[0.0, 0.0], &[false, true], &[0.0, 0.0], 0.5, 1.0);
        assert_eq!(a, vec![1.5, 1.0]);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, 0.3];
        let (a, _) = gae(&r, &v, &[false, false, false], &[0.0, 0.0, 0.7], 0.9, 0.0);
        assert!((a[0] - (0.5 + 0.9 * 0.2 - 0.1)).abs() < 1e-15);
        assert!((a[1] - (-1.0 + 0.9 * 0.3 - 0.2)).abs() < 1e-15);
        assert!((a[2] - (2.0 + 0.9 * 0.7 - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn normalization_moments() {
        let mut v: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() * 5.0 + 2.0).collect();
        normalize(&mut v);
        let mean = v.iter().sum::<f64>() / 100.0;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
        assert!(mean.abs() < 1e-10);
        assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn running_stats_match_batch() {
        let data: Vec<f64> = (0..50).map(|i| (i as f64).sqrt()).collect();
        let mut rms = RunningMeanStd {
            mean: 0.0,
            var: 0.0,
            count: 0.0,
        };
        for chunk in data.chunks(7) {
            rms.update(chunk);
        }
        let mean = data.iter().sum::<f64>() / 50.0;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 50.0;
        assert!((rms.mean - mean).abs() < 1e-12);
        assert!((rms.var - var).abs() < 1e-12);
    }
}
