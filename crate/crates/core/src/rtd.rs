//! Reference trajectory distribution: radial-basis regression of demonstration
//! laps in (lateral offset, speed) versus centerline phase, and a joint
//! Gaussian over the resulting weight vectors.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{ArcLengthCurve, ReferenceTrajectory, Track, Vec2};

/// Gaussian radial basis functions over phase in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct RbfBasis {
    pub centers: Vec<f64>,
    pub bandwidth: f64,
    pub ridge: f64,
    /// Distances wrap around phase 1 -> 0 (closed tracks).
    pub periodic: bool,
}

impl RbfBasis {
    /// Equidistant centers with bandwidth 1.5x the center spacing.
    pub fn equidistant(n_basis: usize, periodic: bool) -> Self {
        assert!(n_basis >= 2, "need at least two basis functions");
        let (centers, spacing): (Vec<f64>, f64) = if periodic {
            let h = 1.0 / n_basis as f64;
            ((0..n_basis).map(|j| j as f64 * h).collect(), h)
        } else {
            let h = 1.0 / (n_basis - 1) as f64;
            ((0..n_basis).map(|j| j as f64 * h).collect(), h)
        };
        RbfBasis {
            centers,
            bandwidth: 1.5 * spacing,
            ridge: 1e-6,
            periodic,
        }
    }

    pub fn with_bandwidth(mut self, bandwidth: f64) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn n_basis(&self) -> usize {
        self.centers.len()
    }

    pub fn eval(&self, phase: f64, out: &mut [f64]) {
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        for (o, &c) in out.iter_mut().zip(&self.centers) {
            let mut d = (phase - c).abs();
            if self.periodic {
                d = d.rem_euclid(1.0);
                d = d.min(1.0 - d);
            }
            *o = (-d * d * inv).exp();
        }
    }

    pub fn design_matrix(&self, phases: &[f64]) -> DMatrix<f64> {
        let n = self.n_basis();
        let mut m = DMatrix::zeros(phases.len(), n);
        let mut row = vec![0.0; n];
        for (i, &z) in phases.iter().enumerate() {
            self.eval(z, &mut row);
            for j in 0..n {
                m[(i, j)] = row[j];
            }
        }
        m
    }

    /// Weighted sum of basis functions at `phase`.
    pub fn reconstruct(&self, weights: &[f64], phase: f64) -> f64 {
        let mut row = vec![0.0; self.n_basis()];
        self.eval(phase, &mut row);
        row.iter().zip(weights).map(|(a, b)| a * b).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryWeights {
    pub lateral: Vec<f64>,
    pub speed: Vec<f64>,
}

impl TrajectoryWeights {
    /// Joint vector `[lateral; speed]`.
    pub fn joint(&self) -> Vec<f64> {
        self.lateral.iter().chain(&self.speed).copied().collect()
    }

    pub fn from_joint(v: &[f64]) -> Self {
        let n = v.len() / 2;
        TrajectoryWeights {
            lateral: v[..n].to_vec(),
            speed: v[n..].to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightFit {
    pub weights: TrajectoryWeights,
    pub lateral_rms: f64,
    pub speed_rms: f64,
}

/// Ridge least squares `(A^T A + ridge I) w = A^T y` via Cholesky.
fn ridge_solve(a: &DMatrix<f64>, ys: &[&[f64]], ridge: f64) -> Result<Vec<DVector<f64>>> {
    let n = a.ncols();
    let mut normal = a.transpose() * a;
    for j in 0..n {
        normal[(j, j)] += ridge;
    }
    let max_diag = (0..n).map(|j| normal[(j, j)]).fold(0.0, f64::max);
    let chol = Cholesky::new(normal.clone())
        .ok_or_else(|| Error::IllConditioned("normal equations not positive definite".into()))?;
    let l = chol.l();
    let min_pivot = (0..n).map(|j| l[(j, j)] * l[(j, j)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * max_diag) {
        return Err(Error::IllConditioned(format!(
            "smallest pivot {min_pivot:e} vs largest diagonal {max_diag:e}"
        )));
    }
    Ok(ys
        .iter()
        .map(|y| chol.solve(&(a.transpose() * DVector::from_column_slice(y))))
        .collect())
}

/// Regresses a demonstration lap's lateral offset and speed against the
/// track centerline phase.
pub fn fit_weights(
    demo: &ReferenceTrajectory,
    track: &Track,
    basis: &RbfBasis,
) -> Result<WeightFit> {
    let centerline = track.centerline();
    let length = centerline.total_length();
    let mut phases = Vec::with_capacity(demo.curve().len());
    let mut lateral = Vec::with_capacity(demo.curve().len());
    for p in demo.curve().points() {
        let proj = centerline.project(*p);
        phases.push(proj.s / length);
        lateral.push(proj.lateral);
    }
    let speed = demo.speeds();
    let a = basis.design_matrix(&phases);
    let sol = ridge_solve(&a, &[&lateral, speed], basis.ridge)?;
    let rms = |w: &DVector<f64>, y: &[f64]| {
        let r = &a * w - DVector::from_column_slice(y);
        (r.norm_squared() / y.len() as f64).sqrt()
    };
    Ok(WeightFit {
        lateral_rms: rms(&sol[0], &lateral),
        speed_rms: rms(&sol[1], speed),
        weights: TrajectoryWeights {
            lateral: sol[0].iter().copied().collect(),
            speed: sol[1].iter().copied().collect(),
        },
    })
}

/// Gaussian over joint weight vectors, bound to one track.
#[derive(Clone, Debug)]
pub struct TrajectoryDistributionModel {
    pub basis: RbfBasis,
    pub mu_w: DVector<f64>,
    pub sigma_w: DMatrix<f64>,
    pub track_binding: String,
    /// Clamp bounds for sampled speeds (m/s).
    pub v_floor: f64,
    pub v_cap: f64,
    /// Fraction of the local half width a sampled line may use.
    pub width_fraction: f64,
    chol: DMatrix<f64>,
}

impl TrajectoryDistributionModel {
    fn finish(
        basis: RbfBasis,
        mu_w: DVector<f64>,
        sigma_w: DMatrix<f64>,
        track_binding: String,
        v_floor: f64,
        v_cap: f64,
        width_fraction: f64,
    ) -> Result<Self> {
        let chol = Cholesky::new(sigma_w.clone())
            .ok_or_else(|| Error::IllConditioned("weight covariance not positive definite".into()))?
            .l();
        Ok(TrajectoryDistributionModel {
            basis,
            mu_w,
            sigma_w,
            track_binding,
            v_floor,
            v_cap,
            width_fraction,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu_w.len()
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn mean_weights(&self) -> TrajectoryWeights {
        TrajectoryWeights::from_joint(self.mu_w.as_slice())
    }

    pub fn to_text(&self) -> String {
        let join = |v: &mut dyn Iterator<Item = f64>| {
            v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "track {}", self.track_binding);
        let _ = writeln!(
            out,
            "basis {} {} {}",
            self.basis.bandwidth, self.basis.ridge, self.basis.periodic
        );
        let _ = writeln!(out, "centers {}", join(&mut self.basis.centers.iter().copied()));
        let _ = writeln!(out, "speed_bounds {} {}", self.v_floor, self.v_cap);
        let _ = writeln!(out, "width_fraction {}", self.width_fraction);
        let _ = writeln!(out, "mu {}", join(&mut self.mu_w.iter().copied()));
        let d = self.dim();
        let _ = writeln!(
            out,
            "sigma {}",
            join(&mut (0..d * d).map(|k| self.sigma_w[(k / d, k % d)]))
        );
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut track = None;
        let mut basis_line = None;
        let mut centers = None;
        let mut bounds = None;
        let mut width_fraction = 0.9;
        let mut mu = None;
        let mut sigma = None;
        let nums = |rest: &str| -> Result<Vec<f64>> {
            rest.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("`{t}`: {e}"))))
                .collect()
        };
        for line in text.lines() {
            let line = line.trim();
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "" => {}
                "track" => track = Some(rest.trim().to_string()),
                "basis" => {
                    let parts: Vec<&str> = rest.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(Error::Parse("basis line needs 3 fields".into()));
                    }
                    let bw = parts[0].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
                    let ridge = parts[1].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
                    let periodic =
                        parts[2].parse::<bool>().map_err(|e| Error::Parse(e.to_string()))?;
                    basis_line = Some((bw, ridge, periodic));
                }
                "centers" => centers = Some(nums(rest)?),
                "speed_bounds" => bounds = Some(nums(rest)?),
                "width_fraction" => {
                    width_fraction = *nums(rest)?
                        .first()
                        .ok_or_else(|| Error::Parse("empty width_fraction".into()))?
                }
                "mu" => mu = Some(nums(rest)?),
                "sigma" => sigma = Some(nums(rest)?),
                other => return Err(Error::Parse(format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::Parse(format!("missing `{k}`"));
        let (bandwidth, ridge, periodic) = basis_line.ok_or_else(|| missing("basis"))?;
        let centers = centers.ok_or_else(|| missing("centers"))?;
        let bounds = bounds.ok_or_else(|| missing("speed_bounds"))?;
        let mu = mu.ok_or_else(|| missing("mu"))?;
        let sigma = sigma.ok_or_else(|| missing("sigma"))?;
        let d = mu.len();
        if d != 2 * centers.len() || sigma.len() != d * d || bounds.len() != 2 {
            return Err(Error::Parse("inconsistent model dimensions".into()));
        }
        Self::finish(
            RbfBasis {
                centers,
                bandwidth,
                ridge,
                periodic,
            },
            DVector::from_vec(mu),
            DMatrix::from_row_slice(d, d, &sigma),
            track.ok_or_else(|| missing("track"))?,
            bounds[0],
            bounds[1],
            width_fraction,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Sample mean and unbiased sample covariance of the demonstration weights,
/// plus a diagonal jitter of `1e-8 * max(trace / dim, 1)`.
pub fn fit_rtd(
    weights: &[TrajectoryWeights],
    basis: &RbfBasis,
    track: &Track,
    v_cap: f64,
) -> Result<TrajectoryDistributionModel> {
    if weights.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: weights.len(),
        });
    }
    let d = 2 * basis.n_basis();
    let rows: Vec<Vec<f64>> = weights.iter().map(|w| w.joint()).collect();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::ShapeMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let n = rows.len() as f64;
    let mut mu = DVector::zeros(d);
    for r in &rows {
        for j in 0..d {
            mu[j] += r[j];
        }
    }
    mu /= n;
    let mut sigma = DMatrix::zeros(d, d);
    for r in &rows {
        for i in 0..d {
            let di = r[i] - mu[i];
            for j in 0..d {
                sigma[(i, j)] += di * (r[j] - mu[j]);
            }
        }
    }
    sigma /= n - 1.0;
    let jitter = covariance_jitter(&sigma);
    for j in 0..d {
        sigma[(j, j)] += jitter;
    }
    TrajectoryDistributionModel::finish(
        basis.clone(),
        mu,
        sigma,
        track.fingerprint(),
        3.0,
        v_cap,
        0.9,
    )
}

pub fn covariance_jitter(sigma: &DMatrix<f64>) -> f64 {
    let d = sigma.nrows() as f64;
    1e-8 * (sigma.trace() / d).max(1.0)
}

/// Lateral offsets and speeds at the track's centerline vertices for a weight
/// vector, before any clamping.
pub fn reconstruct_profiles(
    weights: &TrajectoryWeights,
    basis: &RbfBasis,
    track: &Track,
) -> (Vec<f64>, Vec<f64>) {
    let c = track.centerline();
    let l = c.total_length();
    let mut row = vec![0.0; basis.n_basis()];
    let mut lat = Vec::with_capacity(c.len());
    let mut spd = Vec::with_capacity(c.len());
    for &s in c.cum_s() {
        basis.eval(s / l, &mut row);
        lat.push(row.iter().zip(&weights.lateral).map(|(a, b)| a * b).sum());
        spd.push(row.iter().zip(&weights.speed).map(|(a, b)| a * b).sum());
    }
    (lat, spd)
}

/// Builds a reference trajectory on `track` from lateral offset and speed
/// profiles given per centerline vertex, clamping into the feasible region.
pub fn line_from_profiles(
    track: &Track,
    lateral: &[f64],
    speed: &[f64],
    width_fraction: f64,
    v_floor: f64,
    v_cap: f64,
) -> Result<ReferenceTrajectory> {
    let c = track.centerline();
    let mut pts: Vec<Vec2> = Vec::with_capacity(c.len());
    let mut spd = Vec::with_capacity(c.len());
    for i in 0..c.len() {
        let n = c.vertex_tangent(i).perp_left();
        let e = lateral[i].clamp(
            -width_fraction * track.half_width_right()[i],
            width_fraction * track.half_width_left()[i],
        );
        let p = c.points()[i] + n * e;
        if pts.last().is_some_and(|q| q.distance(p) < 1e-6) {
            continue;
        }
        pts.push(p);
        spd.push(speed[i].clamp(v_floor, v_cap));
    }
    if c.is_closed() && pts.len() > 2 && pts[0].distance(pts[pts.len() - 1]) < 1e-6 {
        pts.pop();
        spd.pop();
    }
    ReferenceTrajectory::new(ArcLengthCurve::new(pts, c.is_closed())?, spd)
}

/// Draws `w ~ N(mu_w, sigma_w)` and reconstructs the corresponding reference
/// line. Deterministic for a given seed.
pub fn sample_reference(
    model: &TrajectoryDistributionModel,
    track: &Track,
    seed: u64,
) -> Result<ReferenceTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = sample_weights(model, &mut rng);
    reference_from_weights(model, track, &w)
}

pub fn sample_weights(
    model: &TrajectoryDistributionModel,
    rng: &mut impl rand::Rng,
) -> TrajectoryWeights {
    let z = DVector::from_iterator(
        model.dim(),
        (0..model.dim()).map(|_| StandardNormal.sample(rng)),
    );
    let w = &model.mu_w + &model.chol * z;
    TrajectoryWeights::from_joint(w.as_slice())
}

pub fn reference_from_weights(
    model: &TrajectoryDistributionModel,
    track: &Track,
    weights: &TrajectoryWeights,
) -> Result<ReferenceTrajectory> {
    let fp = track.fingerprint();
    if fp != model.track_binding {
        return Err(Error::TrackMismatch {
            expected: model.track_binding.clone(),
            got: fp,
        });
    }
    let (lat, spd) = reconstruct_profiles(weights, &model.basis, track);
    line_from_profiles(
        track,
        &lat,
        &spd,
        model.width_fraction,
        model.v_floor,
        model.v_cap,
    )
}
