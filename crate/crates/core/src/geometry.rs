//! Planar curves parameterized by arc length, tracks, reference trajectories
//! and the observation geometry built on top of them.
//!
//! Curves are piecewise linear. Projection onto a curve is exact per segment
//! and global over the whole curve; a uniform grid over segment bounding boxes
//! only prunes the search, it never changes the answer.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Look-ahead arc distances (meters) for the track-boundary observation.
pub const BOUNDARY_DISTANCES: [f64; 7] = [5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0];
/// Number of reference waypoints in the observation.
pub const WAYPOINT_COUNT: usize = 20;
/// Time between consecutive reference waypoints (seconds).
pub const WAYPOINT_SPACING: f64 = 0.25;
/// Sub-step used to integrate the reference speed profile (seconds).
pub const WAYPOINT_SUBSTEP: f64 = 1e-3;

const MIN_SEGMENT: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product; positive when `other` is to the left of `self`.
    #[inline]
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit normal pointing to the left of this direction.
    #[inline]
    pub fn perp_left(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Planar position plus heading (radians, counter-clockwise from +x).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            position: Vec2::new(x, y),
            heading,
        }
    }

    /// World point expressed in this pose's frame (x forward, y left).
    #[inline]
    pub fn to_local(&self, point: Vec2) -> Vec2 {
        (point - self.position).rotate(-self.heading)
    }

    #[inline]
    pub fn to_world(&self, local: Vec2) -> Vec2 {
        local.rotate(self.heading) + self.position
    }
}

/// Rigid transform of world points into the frame of `pose`.
pub fn to_local(pose: &Pose, points: &[Vec2]) -> Vec<Vec2> {
    points.iter().map(|&p| pose.to_local(p)).collect()
}

/// Inverse of [`to_local`].
pub fn to_world(pose: &Pose, points: &[Vec2]) -> Vec<Vec2> {
    points.iter().map(|&p| pose.to_world(p)).collect()
}

/// Foot point of a query on a curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// Arc-length coordinate of the foot point.
    pub s: f64,
    /// Signed offset, positive to the left of the travel direction.
    pub lateral: f64,
    pub foot: Vec2,
    pub segment: usize,
}

impl Projection {
    pub fn distance(&self) -> f64 {
        self.lateral.abs()
    }
}

#[derive(Clone, Debug)]
struct SegmentGrid {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl SegmentGrid {
    fn build(points: &[Vec2], n_segments: usize, mean_len: f64) -> Self {
        let n = points.len();
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        let diag = (hi - lo).norm();
        let cell = (2.0 * mean_len).max(diag / 512.0).max(1e-6);
        let nx = (((hi.x - lo.x) / cell).floor() as usize + 1).max(1);
        let ny = (((hi.y - lo.y) / cell).floor() as usize + 1).max(1);
        let mut cells = vec![Vec::new(); nx * ny];
        for k in 0..n_segments {
            let a = points[k];
            let b = points[(k + 1) % n];
            let i0 = (((a.x.min(b.x) - lo.x) / cell).floor() as usize).min(nx - 1);
            let i1 = (((a.x.max(b.x) - lo.x) / cell).floor() as usize).min(nx - 1);
            let j0 = (((a.y.min(b.y) - lo.y) / cell).floor() as usize).min(ny - 1);
            let j1 = (((a.y.max(b.y) - lo.y) / cell).floor() as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells[j * nx + i].push(k as u32);
                }
            }
        }
        SegmentGrid {
            origin: lo,
            cell,
            nx,
            ny,
            cells,
        }
    }
}

/// Piecewise-linear planar curve with a cumulative arc-length table.
#[derive(Clone, Debug)]
pub struct ArcLengthCurve {
    points: Vec<Vec2>,
    cum_s: Vec<f64>,
    closed: bool,
    total_length: f64,
    grid: SegmentGrid,
}

impl ArcLengthCurve {
    pub fn new(points: Vec<Vec2>, closed: bool) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateCurve(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::DegenerateCurve(format!("non-finite point {p:?}")));
        }
        let n = points.len();
        let mut cum_s = Vec::with_capacity(n);
        cum_s.push(0.0);
        for k in 1..n {
            let len = points[k].distance(points[k - 1]);
            if len <= MIN_SEGMENT {
                return Err(Error::DegenerateCurve(format!(
                    "zero-length segment between points {} and {}",
                    k - 1,
                    k
                )));
            }
            cum_s.push(cum_s[k - 1] + len);
        }
        let mut total_length = cum_s[n - 1];
        if closed {
            let len = points[0].distance(points[n - 1]);
            if len <= MIN_SEGMENT {
                return Err(Error::DegenerateCurve(
                    "closing segment has zero length (last point repeats the first)".into(),
                ));
            }
            total_length += len;
        }
        let n_segments = if closed { n } else { n - 1 };
        let grid = SegmentGrid::build(&points, n_segments, total_length / n_segments as f64);
        Ok(ArcLengthCurve {
            points,
            cum_s,
            closed,
            total_length,
            grid,
        })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn cum_s(&self) -> &[f64] {
        &self.cum_s
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_segments(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    #[inline]
    fn segment(&self, k: usize) -> (Vec2, Vec2) {
        (self.points[k], self.points[(k + 1) % self.points.len()])
    }

    #[inline]
    fn segment_end_s(&self, k: usize) -> f64 {
        if k + 1 < self.points.len() {
            self.cum_s[k + 1]
        } else {
            self.total_length
        }
    }

    /// Maps any arc-length value into the curve's domain (wrapping on closed
    /// curves, clamping on open ones).
    pub fn wrap_s(&self, s: f64) -> f64 {
        if self.closed {
            let w = s.rem_euclid(self.total_length);
            if w >= self.total_length {
                0.0
            } else {
                w
            }
        } else {
            s.clamp(0.0, self.total_length)
        }
    }

    /// Index of the segment containing arc coordinate `s` (already wrapped).
    pub fn segment_index(&self, s: f64) -> usize {
        let k = self.cum_s.partition_point(|&c| c <= s);
        k.saturating_sub(1).min(self.n_segments() - 1)
    }

    /// Segment index and interpolation fraction for arc coordinate `s`.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let s = self.wrap_s(s);
        let k = self.segment_index(s);
        let len = self.segment_end_s(k) - self.cum_s[k];
        (k, ((s - self.cum_s[k]) / len).clamp(0.0, 1.0))
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let (k, t) = self.locate(s);
        let (a, b) = self.segment(k);
        a + (b - a) * t
    }

    /// Unit tangent of the segment containing `s`.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let (k, _) = self.locate(s);
        let (a, b) = self.segment(k);
        (b - a).normalized()
    }

    /// Unit tangent at vertex `i`, averaged over the adjacent segments.
    pub fn vertex_tangent(&self, i: usize) -> Vec2 {
        let n = self.points.len();
        let next = if i + 1 < n {
            Some(self.points[i + 1] - self.points[i])
        } else if self.closed {
            Some(self.points[0] - self.points[i])
        } else {
            None
        };
        let prev = if i > 0 {
            Some(self.points[i] - self.points[i - 1])
        } else if self.closed {
            Some(self.points[0] - self.points[n - 1])
        } else {
            None
        };
        match (prev, next) {
            (Some(p), Some(q)) => {
                let sum = p.normalized() + q.normalized();
                if sum.norm() > 1e-12 {
                    sum.normalized()
                } else {
                    q.normalized()
                }
            }
            (Some(p), None) => p.normalized(),
            (None, Some(q)) => q.normalized(),
            (None, None) => Vec2::new(1.0, 0.0),
        }
    }

    #[inline]
    fn project_segment(&self, k: usize, p: Vec2) -> (f64, Projection) {
        let (a, b) = self.segment(k);
        let d = b - a;
        let len_sq = d.norm_sq();
        let t = ((p - a).dot(d) / len_sq).clamp(0.0, 1.0);
        let foot = a + d * t;
        let off = p - foot;
        let dist_sq = off.norm_sq();
        let mut s = self.cum_s[k] + t * (self.segment_end_s(k) - self.cum_s[k]);
        if self.closed && s >= self.total_length {
            s -= self.total_length;
        }
        let dist = dist_sq.sqrt();
        let side = d.cross(p - a);
        let lateral = if side < 0.0 { -dist } else { dist };
        (
            dist_sq,
            Projection {
                s,
                lateral,
                foot,
                segment: k,
            },
        )
    }

    #[inline]
    fn better(cand: (f64, &Projection), best: (f64, &Projection)) -> bool {
        let tol = 1e-12 * (1.0 + best.0);
        cand.0 < best.0 - tol || ((cand.0 - best.0).abs() <= tol && cand.1.s < best.1.s)
    }

    /// Exhaustive projection over all segments; reference path for the grid search.
    pub fn project_brute(&self, p: Vec2) -> Projection {
        let (mut best_d, mut best) = self.project_segment(0, p);
        for k in 1..self.n_segments() {
            let (d, cand) = self.project_segment(k, p);
            if Self::better((d, &cand), (best_d, &best)) {
                best_d = d;
                best = cand;
            }
        }
        best
    }

    /// Globally nearest point on the curve. Ties resolve to the smaller arc coordinate.
    pub fn project(&self, p: Vec2) -> Projection {
        let g = &self.grid;
        let fx = (p.x - g.origin.x) / g.cell;
        let fy = (p.y - g.origin.y) / g.cell;
        let margin = 4.0;
        if !(fx > -margin && fy > -margin && fx < g.nx as f64 + margin && fy < g.ny as f64 + margin)
        {
            return self.project_brute(p);
        }
        let ci = fx.floor() as i64;
        let cj = fy.floor() as i64;
        let mut best: Option<(f64, Projection)> = None;
        let max_ring = (g.nx.max(g.ny) as i64) + margin as i64 + 1;
        for ring in 0..=max_ring {
            let visit = |i: i64, j: i64, best: &mut Option<(f64, Projection)>| {
                if i < 0 || j < 0 || i >= g.nx as i64 || j >= g.ny as i64 {
                    return;
                }
                for &k in &g.cells[j as usize * g.nx + i as usize] {
                    let (d, cand) = self.project_segment(k as usize, p);
                    match best {
                        Some((bd, b)) if !Self::better((d, &cand), (*bd, b)) => {}
                        _ => *best = Some((d, cand)),
                    }
                }
            };
            if ring == 0 {
                visit(ci, cj, &mut best);
            } else {
                for i in (ci - ring)..=(ci + ring) {
                    visit(i, cj - ring, &mut best);
                    visit(i, cj + ring, &mut best);
                }
                for j in (cj - ring + 1)..=(cj + ring - 1) {
                    visit(ci - ring, j, &mut best);
                    visit(ci + ring, j, &mut best);
                }
            }
            if let Some((bd, _)) = &best {
                let x0 = g.origin.x + (ci - ring) as f64 * g.cell;
                let x1 = g.origin.x + (ci + ring + 1) as f64 * g.cell;
                let y0 = g.origin.y + (cj - ring) as f64 * g.cell;
                let y1 = g.origin.y + (cj + ring + 1) as f64 * g.cell;
                let lb = (p.x - x0).min(x1 - p.x).min(p.y - y0).min(y1 - p.y);
                // strict so that equal-distance ties in unvisited cells are still seen
                if lb > 0.0 && bd.sqrt() < lb - 1e-9 {
                    break;
                }
            }
        }
        match best {
            Some((_, proj)) => proj,
            None => self.project_brute(p),
        }
    }

    /// Signed forward progress from `s_from` to `s_to`. On closed curves the
    /// difference is wrapped into (-L/2, L/2].
    pub fn progress(&self, s_from: f64, s_to: f64) -> Result<f64> {
        for s in [s_from, s_to] {
            if !(s >= 0.0 && (s < self.total_length || (!self.closed && s <= self.total_length)))
            {
                return Err(Error::OutOfRange {
                    s,
                    length: self.total_length,
                });
            }
        }
        Ok(self.progress_unchecked(s_from, s_to))
    }

    #[inline]
    pub fn progress_unchecked(&self, s_from: f64, s_to: f64) -> f64 {
        let d = s_to - s_from;
        if !self.closed {
            return d;
        }
        let l = self.total_length;
        let mut w = d.rem_euclid(l);
        if w > 0.5 * l {
            w -= l;
        }
        w
    }
}

/// Vertices of `curve` resampled at (approximately) uniform arc spacing.
pub fn resample_uniform(curve: &ArcLengthCurve, spacing: f64) -> Vec<Vec2> {
    let n = if curve.is_closed() {
        (curve.total_length() / spacing).round().max(3.0) as usize
    } else {
        (curve.total_length() / spacing).round().max(1.0) as usize + 1
    };
    let step = if curve.is_closed() {
        curve.total_length() / n as f64
    } else {
        curve.total_length() / (n - 1) as f64
    };
    (0..n).map(|i| curve.point_at(i as f64 * step)).collect()
}

/// Closed or open track: centerline plus left/right half widths per vertex.
#[derive(Clone, Debug)]
pub struct Track {
    centerline: ArcLengthCurve,
    half_width_left: Vec<f64>,
    half_width_right: Vec<f64>,
}

impl Track {
    pub fn new(
        centerline: ArcLengthCurve,
        half_width_left: Vec<f64>,
        half_width_right: Vec<f64>,
    ) -> Result<Self> {
        let n = centerline.len();
        if half_width_left.len() != n || half_width_right.len() != n {
            return Err(Error::InvalidGeometry(format!(
                "{} centerline vertices but {}/{} half widths",
                n,
                half_width_left.len(),
                half_width_right.len()
            )));
        }
        if half_width_left
            .iter()
            .chain(&half_width_right)
            .any(|w| !(*w > 0.0 && w.is_finite()))
        {
            return Err(Error::InvalidGeometry("half widths must be positive".into()));
        }
        Ok(Track {
            centerline,
            half_width_left,
            half_width_right,
        })
    }

    pub fn centerline(&self) -> &ArcLengthCurve {
        &self.centerline
    }

    pub fn length(&self) -> f64 {
        self.centerline.total_length()
    }

    pub fn half_width_left(&self) -> &[f64] {
        &self.half_width_left
    }

    pub fn half_width_right(&self) -> &[f64] {
        &self.half_width_right
    }

    /// Interpolated (left, right) half widths at arc coordinate `s`.
    pub fn half_widths_at(&self, s: f64) -> (f64, f64) {
        let (k, t) = self.centerline.locate(s);
        let k1 = (k + 1) % self.centerline.len();
        (
            self.half_width_left[k] * (1.0 - t) + self.half_width_left[k1] * t,
            self.half_width_right[k] * (1.0 - t) + self.half_width_right[k1] * t,
        )
    }

    /// Left and right boundary points at arc coordinate `s`.
    pub fn boundary_at(&self, s: f64) -> (Vec2, Vec2) {
        let c = self.centerline.point_at(s);
        let n = self.centerline.tangent_at(s).perp_left();
        let (hl, hr) = self.half_widths_at(s);
        (c + n * hl, c - n * hr)
    }

    /// Stable identifier derived from the geometry (FNV-1a over the raw coordinates).
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (i, p) in self.centerline.points().iter().enumerate() {
            eat(p.x);
            eat(p.y);
            eat(self.half_width_left[i]);
            eat(self.half_width_right[i]);
        }
        eat(if self.centerline.is_closed() { 1.0 } else { 0.0 });
        format!("track-{h:016x}")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("closed: {}\n", self.centerline.is_closed());
        for (i, p) in self.centerline.points().iter().enumerate() {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                p.x, p.y, self.half_width_left[i], self.half_width_right[i]
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (closed, rows) = parse_records(text.as_bytes(), 4)?;
        let points = rows.iter().map(|r| Vec2::new(r[0], r[1])).collect();
        let hl = rows.iter().map(|r| r[2]).collect();
        let hr = rows.iter().map(|r| r[3]).collect();
        Track::new(ArcLengthCurve::new(points, closed)?, hl, hr)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Track::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Reference line with a speed profile (piecewise linear in arc length).
#[derive(Clone, Debug)]
pub struct ReferenceTrajectory {
    curve: ArcLengthCurve,
    speed: Vec<f64>,
}

impl ReferenceTrajectory {
    pub fn new(curve: ArcLengthCurve, speed: Vec<f64>) -> Result<Self> {
        if speed.len() != curve.len() {
            return Err(Error::InvalidGeometry(format!(
                "{} vertices but {} speeds",
                curve.len(),
                speed.len()
            )));
        }
        if speed.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidGeometry(
                "reference speeds must be positive".into(),
            ));
        }
        Ok(ReferenceTrajectory { curve, speed })
    }

    pub fn curve(&self) -> &ArcLengthCurve {
        &self.curve
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speed
    }

    pub fn speed_at(&self, s: f64) -> f64 {
        let (k, t) = self.curve.locate(s);
        let k1 = (k + 1) % self.speed.len();
        self.speed[k] * (1.0 - t) + self.speed[k1] * t
    }

    /// Time to traverse the full reference at its speed profile (exact for
    /// piecewise-linear speed in arc length).
    pub fn traversal_time(&self) -> f64 {
        let n = self.curve.n_segments();
        let cum = self.curve.cum_s();
        (0..n)
            .map(|k| {
                let len = if k + 1 < self.curve.len() {
                    cum[k + 1] - cum[k]
                } else {
                    self.curve.total_length() - cum[k]
                };
                let v0 = self.speed[k];
                let v1 = self.speed[(k + 1) % self.speed.len()];
                if (v1 - v0).abs() < 1e-12 {
                    len / v0
                } else {
                    len * (v1 / v0).ln() / (v1 - v0)
                }
            })
            .sum()
    }

    /// Arc coordinates reached after each waypoint time offset, starting at
    /// `s0` and integrating ds/dt = v(s) with fixed sub-steps.
    pub fn integrate_waypoints(&self, s0: f64) -> [f64; WAYPOINT_COUNT] {
        let curve = &self.curve;
        let l = curve.total_length();
        let n_seg = curve.n_segments();
        let cum = curve.cum_s();
        let sub = (WAYPOINT_SPACING / WAYPOINT_SUBSTEP).round() as usize;
        let mut out = [0.0; WAYPOINT_COUNT];
        // unwrapped arc coordinate plus a segment cursor
        let mut s = curve.wrap_s(s0);
        let mut k = curve.segment_index(s);
        let mut laps = 0.0;
        let seg_end = |k: usize| if k + 1 < curve.len() { cum[k + 1] } else { l };
        for slot in out.iter_mut() {
            for _ in 0..sub {
                if !curve.is_closed() && s >= l {
                    break;
                }
                let len = seg_end(k) - cum[k];
                let t = ((s - cum[k]) / len).clamp(0.0, 1.0);
                let v = self.speed[k] * (1.0 - t) + self.speed[(k + 1) % self.speed.len()] * t;
                s += v * WAYPOINT_SUBSTEP;
                while s >= seg_end(k) {
                    if k + 1 < n_seg {
                        k += 1;
                    } else if curve.is_closed() {
                        k = 0;
                        s -= l;
                        laps += l;
                    } else {
                        s = s.min(l);
                        break;
                    }
                }
            }
            *slot = s + laps;
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("closed: {}\n", self.curve.is_closed());
        for (i, p) in self.curve.points().iter().enumerate() {
            let _ = writeln!(out, "{} {} {}", p.x, p.y, self.speed[i]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (closed, rows) = parse_records(text.as_bytes(), 3)?;
        let points = rows.iter().map(|r| Vec2::new(r[0], r[1])).collect();
        let speed = rows.iter().map(|r| r[2]).collect();
        ReferenceTrajectory::new(ArcLengthCurve::new(points, closed)?, speed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ReferenceTrajectory::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse_records(reader: impl Read, fields: usize) -> Result<(bool, Vec<Vec<f64>>)> {
    let mut closed = None;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("closed:") {
            closed = Some(match rest.trim() {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: bad closed flag `{other}`",
                        lineno + 1
                    )))
                }
            });
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: `{t}`: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != fields {
            return Err(Error::Parse(format!(
                "line {}: expected {fields} fields, got {}",
                lineno + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    let closed = closed.ok_or_else(|| Error::Parse("missing `closed:` header".into()))?;
    Ok((closed, rows))
}

/// Left then right boundary points at the fixed look-ahead distances, in the
/// car-local frame: `[l0.x, l0.y, .., l6.x, l6.y, r0.x, r0.y, .., r6.y]`.
pub fn boundary_observation(track: &Track, pose: &Pose) -> [f64; 28] {
    let s0 = track.centerline().project(pose.position).s;
    let mut out = [0.0; 28];
    for (i, d) in BOUNDARY_DISTANCES.iter().enumerate() {
        let (left, right) = track.boundary_at(s0 + d);
        let l = pose.to_local(left);
        let r = pose.to_local(right);
        out[2 * i] = l.x;
        out[2 * i + 1] = l.y;
        out[14 + 2 * i] = r.x;
        out[14 + 2 * i + 1] = r.y;
    }
    out
}

/// Reference waypoints at t = 0.25 .. 5.0 s ahead of the pose's projection,
/// in the car-local frame: `[w1.x, w1.y, .., w20.x, w20.y]`.
pub fn waypoint_observation(reference: &ReferenceTrajectory, pose: &Pose) -> [f64; 40] {
    let s0 = reference.curve().project(pose.position).s;
    let mut out = [0.0; 40];
    for (i, s) in reference.integrate_waypoints(s0).iter().enumerate() {
        let w = pose.to_local(reference.curve().point_at(*s));
        out[2 * i] = w.x;
        out[2 * i + 1] = w.y;
    }
    out
}
