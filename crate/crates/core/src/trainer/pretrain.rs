use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bezier::{recency_weights, weighted_ll_and_grad, BernsteinTable};
use crate::env::{ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::expert::DemoDataset;
use crate::nn::Adam;
use crate::policy::{encode_prediction_grad, OutputGrads, PolicyBundle};

use super::config::{PredictorConfig, PretrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainStats {
    /// `mean |a - mu|^2 + alpha_reg |mu|^2`.
    pub bc: f64,
    pub mse: f64,
    pub psi_ll: f64,
    /// `bc - alpha_psi_pt * psi_ll`.
    pub loss: f64,
}

/// Pretraining objective on a batch of demo samples and its flat gradient.
pub fn pretrain_loss_and_grad(
    bundle: &PolicyBundle,
    data: &DemoDataset,
    idx: &[usize],
    cfg: &PretrainConfig,
    table: &BernsteinTable,
    weights: &[f64],
) -> Result<(PretrainStats, Vec<f64>)> {
    if idx.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let b = idx.len();
    let bf = b as f64;
    let mut obs = Array2::zeros((b, OBS_DIM));
    for (r, &i) in idx.iter().enumerate() {
        obs.row_mut(r)
            .assign(&ndarray::ArrayView1::from(&data.samples[i].obs[..]));
    }
    let fwd = bundle.forward_train(obs.view())?;
    let mut g = OutputGrads::zeros(b, bundle.degree);
    let mut st = PretrainStats::default();
    for (r, &i) in idx.iter().enumerate() {
        let s = &data.samples[i];
        for k in 0..ACTION_DIM {
            let mu = fwd.mean[(r, k)];
            let e = mu - s.action[k];
            st.mse += e * e / bf;
            st.bc += (e * e + cfg.alpha_reg * mu * mu) / bf;
            g.mean[(r, k)] = 2.0 * (e + cfg.alpha_reg * mu) / bf;
        }
        if cfg.alpha_psi_pt != 0.0 {
            let raw = fwd.predictor_raw.row(r);
            let p = bundle.decode_prediction(raw.as_slice().unwrap());
            let (ll, grad) = weighted_ll_and_grad(&p, table, &s.future, weights);
            st.psi_ll += ll / bf;
            let mut row = g.predictor_raw.row_mut(r);
            encode_prediction_grad(
                &grad,
                bundle.position_scale,
                -cfg.alpha_psi_pt / bf,
                row.as_slice_mut().unwrap(),
            );
        }
    }
    st.loss = st.bc - cfg.alpha_psi_pt * st.psi_ll;
    let grad = bundle.backward(&fwd, &g)?;
    Ok((st, grad))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Mean minibatch statistics per epoch.
    pub epochs: Vec<PretrainStats>,
    pub final_mse: f64,
    pub steps: usize,
}

/// Minibatch Adam on the pretraining objective. The value head and
/// `log_std` receive no gradient.
pub fn pretrain(
    bundle: &mut PolicyBundle,
    data: &DemoDataset,
    cfg: &PretrainConfig,
    predictor: &PredictorConfig,
    rng: &mut impl Rng,
) -> Result<PretrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let horizon = data.samples[0].future.len();
    if horizon == 0 || data.samples.iter().any(|s| s.future.len() != horizon) {
        return Err(Error::Config("demo futures must share a positive horizon".into()));
    }
    let table = BernsteinTable::new(bundle.degree, horizon);
    let weights = recency_weights(horizon, predictor.lambda_psi);
    let mut opt = Adam::new(bundle.n_params(), cfg.learning_rate);
    let mut params = bundle.params_flat();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = PretrainReport::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut sum = PretrainStats::default();
        let mut n = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (st, grad) = pretrain_loss_and_grad(bundle, data, chunk, cfg, &table, &weights)?;
            opt.step(&mut params, &grad)?;
            bundle.set_params_flat(&params)?;
            sum.bc += st.bc;
            sum.mse += st.mse;
            sum.psi_ll += st.psi_ll;
            sum.loss += st.loss;
            n += 1.0;
            report.steps += 1;
        }
        report.epochs.push(PretrainStats {
            bc: sum.bc / n,
            mse: sum.mse / n,
            psi_ll: sum.psi_ll / n,
            loss: sum.loss / n,
        });
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let mut mse = 0.0;
    for chunk in all.chunks(1024) {
        let (st, _) = pretrain_loss_and_grad(bundle, data, chunk, cfg, &table, &weights)?;
        mse += st.mse * chunk.len() as f64;
    }
    report.final_mse = mse / data.len() as f64;
    Ok(report)
}
