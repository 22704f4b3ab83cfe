//! Probabilistic Bézier curves for short-horizon trajectory prediction.
//!
//! Control point `P_0` is pinned at the origin of the car-local frame with
//! zero covariance; the remaining `M` control points carry independent
//! diagonal Gaussians. Evaluating the curve at phases `i / H` yields `H`
//! Gaussian marginals whose log-likelihood trains the predictor.

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Standard deviations below this are raised to it.
pub const STD_FLOOR: f64 = 1e-3;
pub const VARIANCE_FLOOR: f64 = STD_FLOOR * STD_FLOOR;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0;
    for j in 0..k {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c
}

/// Bernstein basis polynomial `C(M, i) (1 - t)^(M - i) t^i`.
pub fn bernstein(i: usize, degree: usize, t: f64) -> Result<f64> {
    if i > degree {
        return Err(Error::IndexOutOfRange { index: i, degree });
    }
    Ok(binomial(degree, i) * (1.0 - t).powi((degree - i) as i32) * t.powi(i as i32))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BezierParams {
    /// Means of `P_1 .. P_M`.
    pub mu: Vec<Vec2>,
    /// Per-axis log standard deviations of `P_1 .. P_M`.
    pub log_std: Vec<[f64; 2]>,
}

impl BezierParams {
    pub fn degree(&self) -> usize {
        self.mu.len()
    }

    #[inline]
    pub fn std(&self, k: usize, axis: usize) -> f64 {
        self.log_std[k][axis].exp().max(STD_FLOOR)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BezierPrediction {
    pub means: Vec<Vec2>,
    /// Diagonal of each marginal covariance.
    pub variances: Vec<[f64; 2]>,
}

impl BezierPrediction {
    pub fn horizon(&self) -> usize {
        self.means.len()
    }
}

/// Bernstein weights `b_{k,M}(i / H)` for `i = 1..=H`, `k = 1..=M` (the
/// `k = 0` column multiplies the pinned origin and is dropped).
#[derive(Clone, Debug)]
pub struct BernsteinTable {
    degree: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl BernsteinTable {
    pub fn new(degree: usize, horizon: usize) -> Self {
        let mut values = Vec::with_capacity(degree * horizon);
        for i in 1..=horizon {
            let t = i as f64 / horizon as f64;
            for k in 1..=degree {
                values.push(bernstein(k, degree, t).expect("k <= degree"));
            }
        }
        BernsteinTable {
            degree,
            horizon,
            values,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Weights of control points `1..=M` at horizon step `i` (0-based, phase `(i+1)/H`).
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.degree..(i + 1) * self.degree]
    }
}

pub fn evaluate(params: &BezierParams, horizon: usize) -> BezierPrediction {
    evaluate_with(params, &BernsteinTable::new(params.degree(), horizon))
}

pub fn evaluate_with(params: &BezierParams, table: &BernsteinTable) -> BezierPrediction {
    let m = params.degree();
    assert_eq!(m, table.degree(), "degree mismatch");
    let var: Vec<[f64; 2]> = (0..m)
        .map(|k| {
            let sx = params.std(k, 0);
            let sy = params.std(k, 1);
            [sx * sx, sy * sy]
        })
        .collect();
    let mut means = Vec::with_capacity(table.horizon());
    let mut variances = Vec::with_capacity(table.horizon());
    for i in 0..table.horizon() {
        let b = table.row(i);
        let mut mean = Vec2::ZERO;
        let mut v = [0.0; 2];
        for k in 0..m {
            mean += params.mu[k] * b[k];
            let b2 = b[k] * b[k];
            v[0] += b2 * var[k][0];
            v[1] += b2 * var[k][1];
        }
        means.push(mean);
        variances.push([v[0].max(VARIANCE_FLOOR), v[1].max(VARIANCE_FLOOR)]);
    }
    BezierPrediction { means, variances }
}

/// Unfloored mean and diagonal variance of the curve at an arbitrary phase.
pub fn marginal_at(params: &BezierParams, t: f64) -> (Vec2, [f64; 2]) {
    let m = params.degree();
    let mut mean = Vec2::ZERO;
    let mut v = [0.0; 2];
    for k in 0..m {
        let b = bernstein(k + 1, m, t).expect("k <= degree");
        mean += params.mu[k] * b;
        let (sx, sy) = (params.std(k, 0), params.std(k, 1));
        v[0] += b * b * sx * sx;
        v[1] += b * b * sy * sy;
    }
    (mean, v)
}

/// Full 2-D Gaussian log-density with diagonal covariance.
pub fn step_log_likelihood(mean: Vec2, variance: [f64; 2], target: Vec2) -> Result<f64> {
    if let Some(v) = variance.iter().find(|v| !(**v >= VARIANCE_FLOOR)) {
        return Err(Error::SingularCovariance(*v));
    }
    Ok(step_ll_unchecked(mean, variance, target))
}

#[inline]
fn step_ll_unchecked(mean: Vec2, variance: [f64; 2], target: Vec2) -> f64 {
    let rx = mean.x - target.x;
    let ry = mean.y - target.y;
    -0.5 * (rx * rx / variance[0] + ry * ry / variance[1])
        - 0.5 * (variance[0].ln() + variance[1].ln())
        - LN_2PI
}

/// Normalized recency weights `lambda^(i-1) / sum_j lambda^(j-1)`.
pub fn recency_weights(horizon: usize, lambda: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..horizon).map(|i| lambda.powi(i as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn weighted_ll(pred: &BezierPrediction, target: &[Vec2], weights: &[f64]) -> Result<f64> {
    if target.len() != pred.horizon() {
        return Err(Error::ShapeMismatch {
            expected: pred.horizon(),
            got: target.len(),
        });
    }
    let mut acc = 0.0;
    for i in 0..pred.horizon() {
        acc += weights[i] * step_log_likelihood(pred.means[i], pred.variances[i], target[i])?;
    }
    Ok(acc)
}

/// Batch mean of the recency-weighted horizon log-likelihood (to be maximized).
pub fn predictor_loss(
    predictions: &[BezierPrediction],
    targets: &[Vec<Vec2>],
    lambda_psi: f64,
) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if predictions.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            expected: predictions.len(),
            got: targets.len(),
        });
    }
    let weights = recency_weights(predictions[0].horizon(), lambda_psi);
    let mut total = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        total += weighted_ll(p, t, &weights)?;
    }
    Ok(total / predictions.len() as f64)
}

/// Gradient of one trajectory's weighted log-likelihood w.r.t. its Bézier parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BezierGrad {
    pub mu: Vec<Vec2>,
    pub log_std: Vec<[f64; 2]>,
}

/// Weighted horizon log-likelihood of one target trajectory and its gradient.
/// `weights` are the normalized recency weights.
pub fn weighted_ll_and_grad(
    params: &BezierParams,
    table: &BernsteinTable,
    target: &[Vec2],
    weights: &[f64],
) -> (f64, BezierGrad) {
    let m = params.degree();
    let mut std = vec![[0.0; 2]; m];
    let mut floored = vec![[false; 2]; m];
    for k in 0..m {
        for a in 0..2 {
            let raw = params.log_std[k][a].exp();
            floored[k][a] = raw < STD_FLOOR;
            std[k][a] = raw.max(STD_FLOOR);
        }
    }
    let mut grad = BezierGrad {
        mu: vec![Vec2::ZERO; m],
        log_std: vec![[0.0; 2]; m],
    };
    let mut value = 0.0;
    for i in 0..table.horizon() {
        let b = table.row(i);
        let mut mean = Vec2::ZERO;
        let mut var = [0.0; 2];
        for k in 0..m {
            mean += params.mu[k] * b[k];
            let b2 = b[k] * b[k];
            var[0] += b2 * std[k][0] * std[k][0];
            var[1] += b2 * std[k][1] * std[k][1];
        }
        let var_floored = [var[0] < VARIANCE_FLOOR, var[1] < VARIANCE_FLOOR];
        let var = [var[0].max(VARIANCE_FLOOR), var[1].max(VARIANCE_FLOOR)];
        let w = weights[i];
        value += w * step_ll_unchecked(mean, var, target[i]);
        let r = [mean.x - target[i].x, mean.y - target[i].y];
        // d ll / d mean, d ll / d var per axis
        let dm = [-r[0] / var[0], -r[1] / var[1]];
        let dv = [
            0.5 * r[0] * r[0] / (var[0] * var[0]) - 0.5 / var[0],
            0.5 * r[1] * r[1] / (var[1] * var[1]) - 0.5 / var[1],
        ];
        for k in 0..m {
            grad.mu[k].x += w * dm[0] * b[k];
            grad.mu[k].y += w * dm[1] * b[k];
            let b2 = b[k] * b[k];
            for a in 0..2 {
                if !floored[k][a] && !var_floored[a] {
                    grad.log_std[k][a] += w * dv[a] * b2 * 2.0 * std[k][a] * std[k][a];
                }
            }
        }
    }
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernstein_examples() {
        assert_eq!(bernstein(0, 5, 0.0).unwrap(), 1.0);
        assert!((bernstein(2, 5, 0.5).unwrap() - 0.3125).abs() < 1e-15);
        let sum: f64 = (0..=5).map(|i| bernstein(i, 5, 0.37).unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(matches!(
            bernstein(6, 5, 0.5),
            Err(Error::IndexOutOfRange { index: 6, degree: 5 })
        ));
    }

    #[test]
    fn linear_curve_evaluation() {
        let p = BezierParams {
            mu: vec![Vec2::new(10.0, 0.0)],
            log_std: vec![[0.0, 0.0]],
        };
        let pred = evaluate(&p, 2);
        assert_eq!(pred.means[0], Vec2::new(5.0, 0.0));
        assert_eq!(pred.variances[0], [0.25, 0.25]);
        assert_eq!(pred.means[1], Vec2::new(10.0, 0.0));
        assert_eq!(pred.variances[1], [1.0, 1.0]);
    }

    #[test]
    fn zero_means_give_zero_curve() {
        let p = BezierParams {
            mu: vec![Vec2::ZERO; 5],
            log_std: vec![[0.3, -0.2]; 5],
        };
        assert!(evaluate(&p, 50).means.iter().all(|m| *m == Vec2::ZERO));
    }

    #[test]
    fn log_likelihood_examples() {
        let ll = step_log_likelihood(Vec2::ZERO, [1.0, 1.0], Vec2::ZERO).unwrap();
        assert!((ll + 1.837_877).abs() < 1e-6);
        let off = step_log_likelihood(Vec2::ZERO, [1.0, 1.0], Vec2::new(1.0, 0.0)).unwrap();
        assert!((off - (ll - 0.5)).abs() < 1e-14);
        assert!(matches!(
            step_log_likelihood(Vec2::ZERO, [1e-9, 1.0], Vec2::ZERO),
            Err(Error::SingularCovariance(_))
        ));
        // doubling the variance halves the quadratic term and grows the log-det term
        let r = Vec2::new(2.0, 0.0);
        let a = step_log_likelihood(Vec2::ZERO, [1.0, 1.0], r).unwrap();
        let b = step_log_likelihood(Vec2::ZERO, [2.0, 1.0], r).unwrap();
        assert!((b - a - (1.0 - 0.5 * 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn loss_weighting_examples() {
        let pred = BezierPrediction {
            means: vec![Vec2::ZERO, Vec2::ZERO],
            variances: vec![[1.0, 1.0], [1.0, 1.0]],
        };
        let target = vec![Vec2::ZERO, Vec2::new(1.0, 0.0)];
        let a = -LN_2PI;
        let b = -LN_2PI - 0.5;
        let half = predictor_loss(&[pred.clone()], &[target.clone()], 0.5).unwrap();
        assert!((half - (a + 0.5 * b) / 1.5).abs() < 1e-14);
        let uniform = predictor_loss(&[pred.clone()], &[target], 1.0).unwrap();
        assert!((uniform - (a + b) / 2.0).abs() < 1e-14);
        assert!(matches!(
            predictor_loss(&[], &[], 1.0),
            Err(Error::EmptyBatch)
        ));

        let single = BezierPrediction {
            means: vec![Vec2::new(1.0, 2.0)],
            variances: vec![[0.5, 2.0]],
        };
        let t = vec![Vec2::new(0.0, 1.0)];
        let direct = step_log_likelihood(single.means[0], single.variances[0], t[0]).unwrap();
        assert_eq!(predictor_loss(&[single], &[t], 0.3).unwrap(), direct);
    }
}
