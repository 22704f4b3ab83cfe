use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bezier::{recency_weights, weighted_ll_and_grad, BernsteinTable};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::nn::{Adam, DenseNetwork};
use crate::policy::{decode_prediction, encode_prediction_grad};

use super::config::PredictorConfig;

/// Decoding of the predictor head output into Bézier parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictorHead {
    pub degree: usize,
    pub position_scale: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictorTrace {
    pub steps: usize,
    /// Validation log-likelihood at each evaluation (the first is before training).
    pub validation: Vec<f64>,
    pub best_validation: f64,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_validation: usize,
}

fn rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}

/// Mean weighted horizon log-likelihood of `targets` given predictor inputs.
pub fn mean_log_likelihood(
    net: &DenseNetwork,
    head: PredictorHead,
    inputs: ArrayView2<f64>,
    targets: &[&[Vec2]],
    table: &BernsteinTable,
    weights: &[f64],
) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let raw = net.forward(inputs)?;
    let mut total = 0.0;
    for (i, t) in targets.iter().enumerate() {
        let p = decode_prediction(raw.row(i).as_slice().unwrap(), head.degree, head.position_scale);
        total += weighted_ll_and_grad(&p, table, t, weights).0;
    }
    Ok(total / targets.len() as f64)
}

/// Gradient of the negated mean log-likelihood w.r.t. the predictor parameters.
pub fn predictor_nll_and_grad(
    net: &DenseNetwork,
    head: PredictorHead,
    inputs: ArrayView2<f64>,
    targets: &[&[Vec2]],
    table: &BernsteinTable,
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if targets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let cache = net.forward_train(inputs)?;
    let n = targets.len() as f64;
    let mut dout = Array2::zeros(cache.output().dim());
    let mut nll = 0.0;
    for (i, t) in targets.iter().enumerate() {
        let raw = cache.output().row(i);
        let p = decode_prediction(raw.as_slice().unwrap(), head.degree, head.position_scale);
        let (ll, g) = weighted_ll_and_grad(&p, table, t, weights);
        nll -= ll / n;
        let mut row = dout.row_mut(i);
        encode_prediction_grad(&g, head.position_scale, -1.0 / n, row.as_slice_mut().unwrap());
    }
    let mut grad = vec![0.0; net.n_params()];
    net.backward(&cache, dout.view(), &mut grad)?;
    Ok((nll, grad))
}

/// Trains the predictor head on fixed inputs with a held-out split and early
/// stopping; the parameters with the best validation likelihood are kept.
pub fn update_predictor(
    net: &mut DenseNetwork,
    opt: &mut Adam,
    head: PredictorHead,
    inputs: &Array2<f64>,
    targets: &[Vec<Vec2>],
    cfg: &PredictorConfig,
    rng: &mut impl Rng,
) -> Result<PredictorTrace> {
    let n = targets.len();
    if n == 0 {
        return Err(Error::NoFutures);
    }
    let table = BernsteinTable::new(head.degree, cfg.horizon);
    let weights = recency_weights(cfg.horizon, cfg.lambda_psi);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_val = ((n as f64 * cfg.validation_fraction).ceil() as usize).clamp(1, n);
    let (val_idx, train_idx) = if n > 1 {
        order.split_at(n_val.min(n - 1))
    } else {
        (&order[..], &order[..])
    };
    let val_x = rows(inputs, val_idx);
    let val_t: Vec<&[Vec2]> = val_idx.iter().map(|&i| targets[i].as_slice()).collect();
    let evaluate = |net: &DenseNetwork| {
        mean_log_likelihood(net, head, val_x.view(), &val_t, &table, &weights)
    };

    let mut trace = PredictorTrace {
        n_train: train_idx.len(),
        n_validation: val_idx.len(),
        ..Default::default()
    };
    let mut best = evaluate(net)?;
    trace.validation.push(best);
    let mut best_params = net.params().to_vec();
    let mut bad = 0;
    let mut perm: Vec<usize> = train_idx.to_vec();
    let mut cursor = perm.len();
    let mut params = net.params().to_vec();
    let every = cfg.eval_every.max(1);
    for step in 1..=cfg.max_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(perm.len()) {
            if cursor == perm.len() {
                perm.shuffle(rng);
                cursor = 0;
            }
            batch.push(perm[cursor]);
            cursor += 1;
        }
        let x = rows(inputs, &batch);
        let t: Vec<&[Vec2]> = batch.iter().map(|&i| targets[i].as_slice()).collect();
        let (_, grad) = predictor_nll_and_grad(net, head, x.view(), &t, &table, &weights)?;
        opt.step(&mut params, &grad)?;
        net.params_mut().copy_from_slice(&params);
        trace.steps = step;
        if step % every == 0 {
            let v = evaluate(net)?;
            trace.validation.push(v);
            if v > best {
                best = v;
                best_params.copy_from_slice(net.params());
                bad = 0;
            } else {
                bad += 1;
                if bad >= cfg.patience {
                    trace.stopped_early = true;
                    break;
                }
            }
        }
    }
    net.params_mut().copy_from_slice(&best_params);
    trace.best_validation = best;
    Ok(trace)
}
