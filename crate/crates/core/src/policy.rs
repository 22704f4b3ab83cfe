//! Shared feature extractor feeding a Gaussian policy head, a value head and a
//! probabilistic Bézier predictor head.

use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bezier::BezierParams;
use crate::env::{ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::nn::{Activation, DenseNetwork, ForwardCache};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub extractor: Vec<usize>,
    pub policy: Vec<usize>,
    pub value: Vec<usize>,
    pub predictor: Vec<usize>,
    /// Bézier degree `M`; the predictor emits `4 M` values.
    pub degree: usize,
    pub initial_std: f64,
    pub policy_output_gain: f64,
    /// Predicted control-point means are `position_scale * raw output` (m).
    pub position_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            extractor: vec![512, 512],
            policy: vec![128, 128],
            value: vec![512, 512],
            predictor: vec![128, 128],
            degree: 5,
            initial_std: 0.05,
            policy_output_gain: 0.01,
            position_scale: 20.0,
        }
    }
}

impl NetworkConfig {
    pub fn latent_dim(&self) -> usize {
        *self.extractor.last().unwrap_or(&OBS_DIM)
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

/// Parameter ranges of each component inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleLayout {
    pub extractor: Range<usize>,
    pub policy: Range<usize>,
    pub value: Range<usize>,
    pub predictor: Range<usize>,
    pub log_std: Range<usize>,
}

impl BundleLayout {
    pub fn len(&self) -> usize {
        self.log_std.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub extractor: DenseNetwork,
    pub policy: DenseNetwork,
    pub value: DenseNetwork,
    pub predictor: DenseNetwork,
    pub log_std: Vec<f64>,
    pub degree: usize,
    pub position_scale: f64,
}

/// Activations of one batched forward pass, kept for backpropagation.
pub struct BundleForward {
    pub latent: Array2<f64>,
    pub mean: Array2<f64>,
    pub value: Vec<f64>,
    pub predictor_raw: Array2<f64>,
    extractor_cache: ForwardCache,
    policy_cache: ForwardCache,
    value_cache: ForwardCache,
    predictor_cache: ForwardCache,
}

/// Gradients w.r.t. the bundle outputs of one batch.
pub struct OutputGrads {
    pub mean: Array2<f64>,
    pub value: Vec<f64>,
    pub predictor_raw: Array2<f64>,
    pub log_std: Vec<f64>,
}

impl OutputGrads {
    pub fn zeros(batch: usize, degree: usize) -> Self {
        OutputGrads {
            mean: Array2::zeros((batch, ACTION_DIM)),
            value: vec![0.0; batch],
            predictor_raw: Array2::zeros((batch, 4 * degree)),
            log_std: vec![0.0; ACTION_DIM],
        }
    }
}

impl PolicyBundle {
    pub fn new(cfg: &NetworkConfig, rng: &mut impl Rng) -> Self {
        let latent = cfg.latent_dim();
        let extractor = DenseNetwork::orthogonal(
            &sizes(OBS_DIM, &cfg.extractor[..cfg.extractor.len().saturating_sub(1)], latent),
            Activation::Relu,
            std::f64::consts::SQRT_2,
            rng,
        );
        let policy = DenseNetwork::orthogonal(
            &sizes(latent, &cfg.policy, ACTION_DIM),
            Activation::Identity,
            cfg.policy_output_gain,
            rng,
        );
        let value = DenseNetwork::orthogonal(
            &sizes(latent, &cfg.value, 1),
            Activation::Identity,
            1.0,
            rng,
        );
        let predictor = DenseNetwork::orthogonal(
            &sizes(latent, &cfg.predictor, 4 * cfg.degree),
            Activation::Identity,
            0.01,
            rng,
        );
        PolicyBundle {
            extractor,
            policy,
            value,
            predictor,
            log_std: vec![cfg.initial_std.ln(); ACTION_DIM],
            degree: cfg.degree,
            position_scale: cfg.position_scale,
        }
    }

    pub fn layout(&self) -> BundleLayout {
        let a = self.extractor.n_params();
        let b = a + self.policy.n_params();
        let c = b + self.value.n_params();
        let d = c + self.predictor.n_params();
        BundleLayout {
            extractor: 0..a,
            policy: a..b,
            value: b..c,
            predictor: c..d,
            log_std: d..d + self.log_std.len(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().len()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(self.extractor.params());
        v.extend_from_slice(self.policy.params());
        v.extend_from_slice(self.value.params());
        v.extend_from_slice(self.predictor.params());
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        let l = self.layout();
        if flat.len() != l.len() {
            return Err(Error::ShapeMismatch {
                expected: l.len(),
                got: flat.len(),
            });
        }
        self.extractor.params_mut().copy_from_slice(&flat[l.extractor]);
        self.policy.params_mut().copy_from_slice(&flat[l.policy]);
        self.value.params_mut().copy_from_slice(&flat[l.value]);
        self.predictor.params_mut().copy_from_slice(&flat[l.predictor]);
        self.log_std.copy_from_slice(&flat[l.log_std]);
        Ok(())
    }

    pub fn latent(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.extractor.forward(obs)
    }

    /// Policy mean and value for one observation.
    pub fn mean_and_value(&self, obs: &[f64]) -> Result<([f64; 2], f64)> {
        let z = self.extractor.forward_one(obs)?;
        let m = self.policy.forward_one(&z)?;
        let v = self.value.forward_one(&z)?;
        Ok(([m[0], m[1]], v[0]))
    }

    pub fn forward_train(&self, obs: ArrayView2<f64>) -> Result<BundleForward> {
        let extractor_cache = self.extractor.forward_train(obs)?;
        let latent = extractor_cache.output().clone();
        let policy_cache = self.policy.forward_train(latent.view())?;
        let value_cache = self.value.forward_train(latent.view())?;
        let predictor_cache = self.predictor.forward_train(latent.view())?;
        Ok(BundleForward {
            mean: policy_cache.output().clone(),
            value: value_cache.output().column(0).to_vec(),
            predictor_raw: predictor_cache.output().clone(),
            latent,
            extractor_cache,
            policy_cache,
            value_cache,
            predictor_cache,
        })
    }

    /// Backpropagates output gradients into a flat gradient vector laid out
    /// as [`Self::params_flat`].
    pub fn backward(&self, fwd: &BundleForward, g: &OutputGrads) -> Result<Vec<f64>> {
        let l = self.layout();
        let mut grad = vec![0.0; l.len()];
        let vcol = Array2::from_shape_vec((g.value.len(), 1), g.value.clone())
            .map_err(|_| Error::ShapeMismatch {
                expected: fwd.value.len(),
                got: g.value.len(),
            })?;
        let mut dz = self
            .policy
            .backward(&fwd.policy_cache, g.mean.view(), &mut grad[l.policy.clone()])?;
        dz += &self
            .value
            .backward(&fwd.value_cache, vcol.view(), &mut grad[l.value.clone()])?;
        dz += &self.predictor.backward(
            &fwd.predictor_cache,
            g.predictor_raw.view(),
            &mut grad[l.predictor.clone()],
        )?;
        self.extractor
            .backward(&fwd.extractor_cache, dz.view(), &mut grad[l.extractor.clone()])?;
        grad[l.log_std].copy_from_slice(&g.log_std);
        Ok(grad)
    }

    /// Decodes one predictor output row into Bézier control-point parameters.
    pub fn decode_prediction(&self, raw: &[f64]) -> BezierParams {
        decode_prediction(raw, self.degree, self.position_scale)
    }
}

pub fn decode_prediction(raw: &[f64], degree: usize, position_scale: f64) -> BezierParams {
    let m = degree;
    BezierParams {
        mu: (0..m)
            .map(|k| Vec2::new(raw[2 * k] * position_scale, raw[2 * k + 1] * position_scale))
            .collect(),
        log_std: (0..m)
            .map(|k| [raw[2 * m + 2 * k], raw[2 * m + 2 * k + 1]])
            .collect(),
    }
}

/// Chain rule from Bézier parameter gradients back to one raw output row.
pub fn encode_prediction_grad(
    grad: &crate::bezier::BezierGrad,
    position_scale: f64,
    scale: f64,
    out: &mut [f64],
) {
    let m = grad.mu.len();
    for k in 0..m {
        out[2 * k] += scale * grad.mu[k].x * position_scale;
        out[2 * k + 1] += scale * grad.mu[k].y * position_scale;
        out[2 * m + 2 * k] += scale * grad.log_std[k][0];
        out[2 * m + 2 * k + 1] += scale * grad.log_std[k][1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> NetworkConfig {
        NetworkConfig {
            extractor: vec![16, 16],
            policy: vec![8],
            value: vec![8],
            predictor: vec![8],
            degree: 3,
            ..Default::default()
        }
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = PolicyBundle::new(&small(), &mut rng);
        let mut p = b.params_flat();
        assert_eq!(p.len(), b.n_params());
        p[3] += 1.0;
        b.set_params_flat(&p).unwrap();
        assert_eq!(b.params_flat(), p);
        assert!(b.set_params_flat(&p[1..]).is_err());
    }

    #[test]
    fn output_shapes_and_initial_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = PolicyBundle::new(&small(), &mut rng);
        let obs = Array2::from_elem((4, OBS_DIM), 0.1);
        let f = b.forward_train(obs.view()).unwrap();
        assert_eq!(f.mean.dim(), (4, 2));
        assert_eq!(f.value.len(), 4);
        assert_eq!(f.predictor_raw.dim(), (4, 12));
        assert!((b.log_std[0].exp() - 0.05).abs() < 1e-15);
        let (m, v) = b.mean_and_value(obs.row(0).as_slice().unwrap()).unwrap();
        assert_eq!(m[0], f.mean[(0, 0)]);
        assert_eq!(v, f.value[0]);
    }

    #[test]
    fn decode_layout() {
        let raw: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let p = decode_prediction(&raw, 3, 2.0);
        assert_eq!(p.mu[1], Vec2::new(4.0, 6.0));
        assert_eq!(p.log_std[2], [10.0, 11.0]);
    }
}
