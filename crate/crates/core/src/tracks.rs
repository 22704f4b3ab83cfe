//! Procedural closed tracks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{resample_uniform, ArcLengthCurve, Track, Vec2};

/// Narrowest allowed half width (m); the car is about 1.8 m wide.
pub const MIN_HALF_WIDTH: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    Oval,
    Figure,
    RandomCircuit,
}

impl std::str::FromStr for TrackKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oval" => Ok(TrackKind::Oval),
            "figure" => Ok(TrackKind::Figure),
            "random_circuit" | "random-circuit" => Ok(TrackKind::RandomCircuit),
            _ => Err(Error::Config(format!("unknown track kind `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackGenConfig {
    pub kind: TrackKind,
    /// Oval straight length (m).
    pub straight: f64,
    /// Oval corner radius (m).
    pub radius: f64,
    /// Mean radius of polar-shaped tracks (m).
    pub base_radius: f64,
    pub half_width: f64,
    /// Target centerline vertex spacing (m).
    pub spacing: f64,
}

impl Default for TrackGenConfig {
    fn default() -> Self {
        TrackGenConfig {
            kind: TrackKind::Oval,
            straight: 174.34,
            radius: 40.0,
            base_radius: 70.0,
            half_width: 6.0,
            spacing: 1.0,
        }
    }
}

pub fn generate_track(cfg: &TrackGenConfig, seed: u64) -> Result<Track> {
    if !(cfg.half_width >= MIN_HALF_WIDTH) {
        return Err(Error::InvalidGeometry(format!(
            "half width {} below minimum {}",
            cfg.half_width, MIN_HALF_WIDTH
        )));
    }
    if !(cfg.spacing > 0.0) {
        return Err(Error::InvalidGeometry("spacing must be positive".into()));
    }
    match cfg.kind {
        TrackKind::Oval => oval_track(cfg.straight, cfg.radius, cfg.half_width, cfg.spacing),
        TrackKind::Figure => polar_track(
            &[(2, 0.25, 0.0)],
            cfg.base_radius,
            cfg.half_width,
            cfg.spacing,
        ),
        TrackKind::RandomCircuit => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let harmonics: Vec<(usize, f64, f64)> = (2..=4)
                    .map(|k| {
                        (
                            k,
                            rng.gen_range(0.0..0.3 / k as f64),
                            rng.gen_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect();
                if let Ok(t) = polar_track(&harmonics, cfg.base_radius, cfg.half_width, cfg.spacing)
                {
                    return Ok(t);
                }
            }
            Err(Error::InvalidGeometry(
                "no drivable random circuit found for these parameters".into(),
            ))
        }
    }
}

/// Two straights joined by semicircles, counter-clockwise, starting at the
/// beginning of the lower straight.
pub fn oval_track(straight: f64, radius: f64, half_width: f64, spacing: f64) -> Result<Track> {
    if !(straight > 0.0 && radius > 0.0) {
        return Err(Error::InvalidGeometry(
            "oval straight and radius must be positive".into(),
        ));
    }
    if half_width >= radius {
        return Err(Error::InvalidGeometry(
            "half width must be smaller than the corner radius".into(),
        ));
    }
    let arc = std::f64::consts::PI * radius;
    let length = 2.0 * straight + 2.0 * arc;
    let n = (length / spacing).round().max(8.0) as usize;
    let pts: Vec<Vec2> = (0..n)
        .map(|i| {
            let s = i as f64 * length / n as f64;
            oval_point(s, straight, radius)
        })
        .collect();
    let curve = ArcLengthCurve::new(pts, true)?;
    Track::new(curve, vec![half_width; n], vec![half_width; n])
}

fn oval_point(s: f64, straight: f64, radius: f64) -> Vec2 {
    use std::f64::consts::{FRAC_PI_2, PI};
    let arc = PI * radius;
    if s < straight {
        Vec2::new(s, -radius)
    } else if s < straight + arc {
        let a = -FRAC_PI_2 + (s - straight) / radius;
        Vec2::new(straight + radius * a.cos(), radius * a.sin())
    } else if s < 2.0 * straight + arc {
        Vec2::new(straight - (s - straight - arc), radius)
    } else {
        let a = FRAC_PI_2 + (s - 2.0 * straight - arc) / radius;
        Vec2::new(radius * a.cos(), radius * a.sin())
    }
}

/// Star-shaped circuit `r(theta) = R (1 + sum a_k cos(k theta + phi_k))`.
fn polar_track(
    harmonics: &[(usize, f64, f64)],
    base_radius: f64,
    half_width: f64,
    spacing: f64,
) -> Result<Track> {
    let dense = 20_000;
    let r = |t: f64| {
        base_radius
            * (1.0
                + harmonics
                    .iter()
                    .map(|&(k, a, p)| a * (k as f64 * t + p).cos())
                    .sum::<f64>())
    };
    let pts: Vec<Vec2> = (0..dense)
        .map(|i| {
            let t = i as f64 / dense as f64 * std::f64::consts::TAU;
            let rt = r(t);
            Vec2::new(rt * t.cos(), rt * t.sin())
        })
        .collect();
    if pts.iter().any(|p| p.norm() <= half_width) {
        return Err(Error::InvalidGeometry("circuit passes too close to its center".into()));
    }
    let curve = ArcLengthCurve::new(pts, true)?;
    let pts = resample_uniform(&curve, spacing);
    let n = pts.len();
    let min_radius = curvature(&pts, true)
        .iter()
        .map(|k| 1.0 / k.abs().max(1e-12))
        .fold(f64::INFINITY, f64::min);
    if min_radius < 2.0 * half_width + 5.0 {
        return Err(Error::InvalidGeometry(format!(
            "tightest corner radius {min_radius:.1} m too small for half width {half_width}"
        )));
    }
    Track::new(ArcLengthCurve::new(pts, true)?, vec![half_width; n], vec![half_width; n])
}

/// Signed curvature at each vertex from the circle through it and its neighbours.
/// Endpoints of open polylines copy their neighbour.
pub fn curvature(points: &[Vec2], closed: bool) -> Vec<f64> {
    let n = points.len();
    let mut k = vec![0.0; n];
    for i in 0..n {
        let (a, b) = if closed {
            ((i + n - 1) % n, (i + 1) % n)
        } else if i == 0 || i == n - 1 {
            continue;
        } else {
            (i - 1, i + 1)
        };
        let (p, q, r) = (points[a], points[i], points[b]);
        let denom = p.distance(q) * q.distance(r) * p.distance(r);
        if denom > 0.0 {
            k[i] = 2.0 * (q - p).cross(r - q) / denom;
        }
    }
    if !closed && n >= 3 {
        k[0] = k[1];
        k[n - 1] = k[n - 2];
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oval_perimeter() {
        let t = oval_track(200.0, 40.0, 6.0, 1.0).unwrap();
        let analytic = 2.0 * 200.0 + std::f64::consts::TAU * 40.0;
        assert!((t.length() - analytic).abs() < 0.05, "{}", t.length());
        assert!((analytic - 651.327).abs() < 1e-3);
    }

    #[test]
    fn same_seed_same_file() {
        let cfg = TrackGenConfig {
            kind: TrackKind::RandomCircuit,
            ..Default::default()
        };
        let a = generate_track(&cfg, 5).unwrap().to_text();
        let b = generate_track(&cfg, 5).unwrap().to_text();
        assert_eq!(a, b);
        let c = generate_track(&cfg, 6).unwrap().to_text();
        assert_ne!(a, c);
    }

    #[test]
    fn narrow_width_rejected() {
        let cfg = TrackGenConfig {
            half_width: 0.5,
            ..Default::default()
        };
        assert!(matches!(generate_track(&cfg, 0), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn figure_is_valid() {
        let cfg = TrackGenConfig {
            kind: TrackKind::Figure,
            ..Default::default()
        };
        let t = generate_track(&cfg, 0).unwrap();
        assert!(t.centerline().is_closed());
        assert!(t.length() > 400.0);
    }

    #[test]
    fn curvature_of_circle() {
        let pts: Vec<Vec2> = (0..100)
            .map(|i| {
                let a = i as f64 / 100.0 * std::f64::consts::TAU;
                Vec2::new(25.0 * a.cos(), 25.0 * a.sin())
            })
            .collect();
        for k in curvature(&pts, true) {
            assert!((k - 1.0 / 25.0).abs() < 1e-12);
        }
    }
}
