//! Dense feed-forward networks with hand-written reverse-mode gradients,
//! diagonal Gaussian helpers, an Adam optimizer and finite-difference checks.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
pub const LOG_STD_MIN: f64 = -9.210_340_371_976_184; // ln 1e-4
pub const LOG_STD_MAX: f64 = 2.302_585_092_994_046; // ln 10

static STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

/// Fully connected network. Hidden layers use ReLU; the output layer uses
/// `output_activation`. Parameters live in one flat vector: for each layer the
/// `in x out` weight matrix (row-major) followed by the `out` biases.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseNetwork {
    sizes: Vec<usize>,
    output_activation: Activation,
    params: Vec<f64>,
    #[serde(skip, default = "fresh_stamp")]
    stamp: u64,
}

/// Layer activations recorded by [`DenseNetwork::forward_train`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    stamp: u64,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("non-empty cache")
    }
}

impl DenseNetwork {
    pub fn zeros(sizes: &[usize], output_activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        DenseNetwork {
            sizes: sizes.to_vec(),
            output_activation,
            params: vec![0.0; n],
            stamp: fresh_stamp(),
        }
    }

    /// Orthogonal initialization with gain sqrt(2) on hidden layers and
    /// `output_gain` on the last layer; zero biases.
    pub fn orthogonal(
        sizes: &[usize],
        output_activation: Activation,
        output_gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut net = Self::zeros(sizes, output_activation);
        let n_layers = net.n_layers();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == n_layers {
                output_gain
            } else {
                std::f64::consts::SQRT_2
            };
            let w = orthogonal_matrix(fan_in, fan_out, rng);
            let off = net.layer_offset(l);
            for i in 0..fan_in {
                for j in 0..fan_out {
                    net.params[off + i * fan_out + j] = gain * w[(i, j)];
                }
            }
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.stamp = fresh_stamp();
        &mut self.params
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes[..=layer]
            .windows(2)
            .take(layer)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn weight(&self, layer: usize) -> (ArrayView2<'_, f64>, &[f64]) {
        let off = self.layer_offset(layer);
        let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
        let w = ArrayView2::from_shape((i, o), &self.params[off..off + i * o]).unwrap();
        (w, &self.params[off + i * o..off + i * o + o])
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            self.output_activation
        } else {
            Activation::Relu
        }
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_size() {
            return Err(Error::ShapeMismatch {
                expected: self.input_size(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, layer: usize, x: &ArrayView2<f64>) -> Array2<f64> {
        let (w, b) = self.weight(layer);
        let mut z = x.dot(&w);
        let b = ndarray::ArrayView1::from(b);
        z += &b;
        if self.activation(layer) == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        z
    }

    /// Batched inference; rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = self.layer_forward(0, &x);
        for l in 1..self.n_layers() {
            h = self.layer_forward(l, &h.view());
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, x.len()), x).unwrap();
        Ok(self.forward(x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass that records activations for [`Self::backward`].
    pub fn forward_train(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let mut acts = Vec::with_capacity(self.n_layers() + 1);
        acts.push(x.to_owned());
        for l in 0..self.n_layers() {
            let h = self.layer_forward(l, &acts[l].view());
            acts.push(h);
        }
        Ok(ForwardCache {
            stamp: self.stamp,
            acts,
        })
    }

    /// Accumulates parameter gradients into `grad` (same layout as the
    /// parameters) and returns the gradient w.r.t. the input batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
        grad: &mut [f64],
    ) -> Result<Array2<f64>> {
        if cache.stamp != self.stamp || cache.acts.len() != self.n_layers() + 1 {
            return Err(Error::StaleCache);
        }
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        if output_grad.dim() != cache.output().dim() {
            return Err(Error::ShapeMismatch {
                expected: self.output_size(),
                got: output_grad.ncols(),
            });
        }
        let mut g = output_grad.to_owned();
        for l in (0..self.n_layers()).rev() {
            if self.activation(l) == Activation::Relu {
                ndarray::Zip::from(&mut g)
                    .and(&cache.acts[l + 1])
                    .for_each(|g, &a| {
                        if a <= 0.0 {
                            *g = 0.0
                        }
                    });
            }
            let x = &cache.acts[l];
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let dw = x.t().dot(&g);
            for (dst, src) in grad[off..off + i * o].iter_mut().zip(dw.iter()) {
                *dst += *src;
            }
            let db = g.sum_axis(Axis(0));
            for (dst, src) in grad[off + i * o..off + i * o + o].iter_mut().zip(db.iter()) {
                *dst += *src;
            }
            let (w, _) = self.weight(l);
            g = g.dot(&w.t());
        }
        Ok(g)
    }
}

fn orthogonal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let (r, c) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let rdiag = qr.r().diagonal();
    // sign fix so the distribution is uniform over orthogonal matrices
    for j in 0..c {
        if rdiag[j] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

/// Clamped log standard deviation used everywhere a Gaussian policy is evaluated.
#[inline]
pub fn clamp_log_std(log_std: f64) -> f64 {
    log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// Diagonal Gaussian log-density with full normalizing constant.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let ls = clamp_log_std(log_std[i]);
        let z = (action[i] - mean[i]) * (-ls).exp();
        lp += -0.5 * z * z - ls - 0.5 * LN_2PI;
    }
    lp
}

/// Gradients of [`gaussian_log_prob`] w.r.t. the mean and the log std.
pub fn gaussian_log_prob_grad(
    mean: &[f64],
    log_std: &[f64],
    action: &[f64],
    d_mean: &mut [f64],
    d_log_std: &mut [f64],
) {
    for i in 0..mean.len() {
        let ls = clamp_log_std(log_std[i]);
        let inv_var = (-2.0 * ls).exp();
        let r = action[i] - mean[i];
        d_mean[i] = r * inv_var;
        d_log_std[i] = if log_std[i] == ls {
            r * r * inv_var - 1.0
        } else {
            0.0
        };
    }
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std
        .iter()
        .map(|&ls| clamp_log_std(ls) + 0.5 * (LN_2PI + 1.0))
        .sum()
}

pub fn gaussian_sample(mean: &[f64], log_std: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(&m, &ls)| m + clamp_log_std(ls).exp() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Gaussian policy head: state-dependent mean, state-independent learnable log std.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianHead {
    pub mean_network: DenseNetwork,
    pub log_std: Vec<f64>,
}

impl GaussianHead {
    pub fn new(mean_network: DenseNetwork, initial_std: f64) -> Self {
        let d = mean_network.output_size();
        GaussianHead {
            mean_network,
            log_std: vec![initial_std.ln(); d],
        }
    }

    pub fn mean(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.mean_network.forward_one(features)
    }

    pub fn log_prob(&self, features: &[f64], action: &[f64]) -> Result<f64> {
        Ok(gaussian_log_prob(&self.mean(features)?, &self.log_std, action))
    }

    pub fn sample(&self, features: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
        Ok(gaussian_sample(&self.mean(features)?, &self.log_std, rng))
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|&l| clamp_log_std(l).exp()).collect()
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NumericalBlowup(format!(
                "parameter {i} not finite after optimizer step"
            )));
        }
        Ok(())
    }
}

/// Scales `grads` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= k);
    }
    norm
}

pub mod gradcheck {
    //! Central finite differences for verifying analytic gradients.

    /// Central-difference gradient of `f` at `x` with step `h`.
    pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut x = x.to_vec();
        (0..x.len())
            .map(|i| {
                let orig = x[i];
                x[i] = orig + h;
                let fp = f(&x);
                x[i] = orig - h;
                let fm = f(&x);
                x[i] = orig;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Relative error `|a - b| / max(|a|, |b|, floor)`; the floor keeps
    /// near-zero components from dominating.
    pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(floor)
    }

    /// Largest relative error over all components.
    pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &b)| relative_error(a, b, floor))
            .fold(0.0, f64::max)
    }
}

/// Convenience: one-row batch view.
pub fn row(x: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, x.len()), x).unwrap()
}
