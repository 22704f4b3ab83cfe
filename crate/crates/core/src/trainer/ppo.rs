use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bezier::{weighted_ll_and_grad, BernsteinTable};
use crate::env::{ACTION_DIM, OBS_DIM};
use crate::error::Result;
use crate::geometry::Vec2;
use crate::nn::{
    clamp_log_std, clip_grad_norm, gaussian_entropy, gaussian_log_prob, gaussian_log_prob_grad,
    Adam,
};
use crate::policy::{encode_prediction_grad, OutputGrads, PolicyBundle};

use super::config::PpoConfig;
use super::rollout::RolloutBuffer;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpoLossConfig {
    pub clip_range: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub psi_coef: f64,
}

impl From<&PpoConfig> for PpoLossConfig {
    fn from(c: &PpoConfig) -> Self {
        PpoLossConfig {
            clip_range: c.clip_range,
            ent_coef: c.ent_coef,
            vf_coef: c.vf_coef,
            psi_coef: c.psi_coef,
        }
    }
}

/// One PPO minibatch. `futures[i]` holds the realized next `H` positions in
/// the car-local frame where available.
#[derive(Clone, Debug)]
pub struct Minibatch {
    pub obs: Array2<f64>,
    pub actions: Vec<[f64; 2]>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub futures: Vec<Option<Vec<Vec2>>>,
}

impl Minibatch {
    pub fn from_buffer(buf: &RolloutBuffer, idx: &[usize], horizon: Option<usize>) -> Self {
        let mut obs = Array2::zeros((idx.len(), OBS_DIM));
        for (r, &i) in idx.iter().enumerate() {
            obs.row_mut(r).assign(&buf.obs.row(i));
        }
        Minibatch {
            obs,
            actions: idx.iter().map(|&i| buf.actions[i]).collect(),
            old_log_probs: idx.iter().map(|&i| buf.log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| buf.advantages[i]).collect(),
            returns: idx.iter().map(|&i| buf.returns[i]).collect(),
            futures: idx
                .iter()
                .map(|&i| horizon.and_then(|h| buf.future(i, h)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    /// Minimized objective `-(pg + ent_coef H - vf_coef VF + psi_coef L_psi)`.
    pub loss: f64,
    pub pg: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub psi_ll: f64,
    pub n_future: usize,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub max_ratio_deviation: f64,
}

/// PPO objective on a minibatch and its gradient w.r.t. the flat bundle parameters.
pub fn ppo_loss_and_grad(
    bundle: &PolicyBundle,
    mb: &Minibatch,
    cfg: &PpoLossConfig,
    table: &BernsteinTable,
    weights: &[f64],
) -> Result<(LossStats, Vec<f64>)> {
    let b = mb.len();
    let bf = b as f64;
    let fwd = bundle.forward_train(mb.obs.view())?;
    let mut g = OutputGrads::zeros(b, bundle.degree);
    let mut st = LossStats::default();
    let mut dmean = [0.0; ACTION_DIM];
    let mut dls = [0.0; ACTION_DIM];
    let (lo, hi) = (1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
    for i in 0..b {
        let mean = [fwd.mean[(i, 0)], fwd.mean[(i, 1)]];
        let a = &mb.actions[i];
        let logp = gaussian_log_prob(&mean, &bundle.log_std, a);
        let log_ratio = logp - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = mb.advantages[i];
        let clipped = ratio.clamp(lo, hi);
        st.pg += (ratio * adv).min(clipped * adv) / bf;
        st.approx_kl += -log_ratio / bf;
        if (ratio - 1.0).abs() > cfg.clip_range {
            st.clip_fraction += 1.0 / bf;
        }
        st.max_ratio_deviation = st.max_ratio_deviation.max((ratio - 1.0).abs());
        let binding = (adv >= 0.0 && ratio > hi) || (adv < 0.0 && ratio < lo);
        if !binding {
            gaussian_log_prob_grad(&mean, &bundle.log_std, a, &mut dmean, &mut dls);
            let w = -ratio * adv / bf;
            for k in 0..ACTION_DIM {
                g.mean[(i, k)] = w * dmean[k];
                g.log_std[k] += w * dls[k];
            }
        }
        let err = fwd.value[i] - mb.returns[i];
        st.value_loss += err * err / bf;
        g.value[i] = cfg.vf_coef * 2.0 * err / bf;
    }
    st.entropy = gaussian_entropy(&bundle.log_std);
    for k in 0..ACTION_DIM {
        if clamp_log_std(bundle.log_std[k]) == bundle.log_std[k] {
            g.log_std[k] -= cfg.ent_coef;
        }
    }
    st.n_future = mb.futures.iter().filter(|f| f.is_some()).count();
    if st.n_future > 0 && cfg.psi_coef != 0.0 {
        let nf = st.n_future as f64;
        for (i, fut) in mb.futures.iter().enumerate() {
            if let Some(target) = fut {
                let raw = fwd.predictor_raw.row(i);
                let params = bundle.decode_prediction(raw.as_slice().unwrap());
                let (ll, grad) = weighted_ll_and_grad(&params, table, target, weights);
                st.psi_ll += ll / nf;
                let mut row = g.predictor_raw.row_mut(i);
                encode_prediction_grad(
                    &grad,
                    bundle.position_scale,
                    -cfg.psi_coef / nf,
                    row.as_slice_mut().unwrap(),
                );
            }
        }
    }
    st.loss = -(st.pg + cfg.ent_coef * st.entropy - cfg.vf_coef * st.value_loss
        + cfg.psi_coef * st.psi_ll);
    let grad = bundle.backward(&fwd, &g)?;
    Ok((st, grad))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoMetrics {
    pub pg: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub psi_ll: f64,
    /// Mean approximate KL of the last completed epoch.
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub epochs: usize,
    pub stopped_on_kl: bool,
    pub grad_norm: f64,
    /// Largest `|ratio - 1|` in the first minibatch of the first epoch.
    pub initial_ratio_deviation: f64,
}

/// Epochs of shuffled minibatch updates; stops early once an epoch's mean
/// approximate KL exceeds `kl_threshold`.
pub fn ppo_update(
    bundle: &mut PolicyBundle,
    opt: &mut Adam,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    horizon: Option<(usize, &BernsteinTable, &[f64])>,
    rng: &mut impl Rng,
) -> Result<PpoMetrics> {
    let loss_cfg = PpoLossConfig {
        psi_coef: if horizon.is_some() { cfg.psi_coef } else { 0.0 },
        ..PpoLossConfig::from(cfg)
    };
    let dummy_table = BernsteinTable::new(bundle.degree, 1);
    let (h, table, weights) = match horizon {
        Some((h, t, w)) => (Some(h), t, w),
        None => (None, &dummy_table, &[1.0][..]),
    };
    let mut idx: Vec<usize> = (0..buf.len()).collect();
    let mut m = PpoMetrics::default();
    let mut params = bundle.params_flat();
    for epoch in 0..cfg.n_epochs {
        idx.shuffle(rng);
        let mut sums = PpoMetrics::default();
        let mut n_mb = 0usize;
        for chunk in idx.chunks(cfg.batch_size) {
            let mb = Minibatch::from_buffer(buf, chunk, h);
            let (st, mut grad) = ppo_loss_and_grad(bundle, &mb, &loss_cfg, table, weights)?;
            if epoch == 0 && n_mb == 0 {
                m.initial_ratio_deviation = st.max_ratio_deviation;
            }
            sums.pg += st.pg;
            sums.value_loss += st.value_loss;
            sums.entropy += st.entropy;
            sums.psi_ll += st.psi_ll;
            sums.approx_kl += st.approx_kl;
            sums.clip_fraction += st.clip_fraction;
            sums.grad_norm += clip_grad_norm(&mut grad, cfg.max_grad_norm);
            opt.step(&mut params, &grad)?;
            bundle.set_params_flat(&params)?;
            n_mb += 1;
        }
        let k = n_mb as f64;
        m.pg = sums.pg / k;
        m.value_loss = sums.value_loss / k;
        m.entropy = sums.entropy / k;
        m.psi_ll = sums.psi_ll / k;
        m.approx_kl = sums.approx_kl / k;
        m.clip_fraction = sums.clip_fraction / k;
        m.grad_norm = sums.grad_norm / k;
        m.epochs = epoch + 1;
        if m.approx_kl > cfg.kl_threshold {
            m.stopped_on_kl = true;
            break;
        }
    }
    Ok(m)
}
