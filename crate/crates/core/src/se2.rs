//! Planar rigid-body poses, the weighted product metric on SE(2), and
//! half-space polytopes in the (x, y, theta) chart.
//!
//! Poses always carry `theta` in (-pi, pi]. Polytopes live in a chart where
//! the angular coordinate may be shifted by multiples of 2 pi, which lets a
//! set that straddles the seam stay a single convex polytope. Membership and
//! intersection tests apply the matching shift.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::{QpError, QpProblem};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite value: {0}")]
    NonFinite(f64),
    #[error("interpolation parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("polytope is empty")]
    Empty,
    #[error("malformed polytope: {0}")]
    Malformed(String),
    #[error("linear program failed: {0}")]
    Solver(#[from] QpError),
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> Result<f64, GeometryError> {
    if !a.is_finite() {
        return Err(GeometryError::NonFinite(a));
    }
    Ok(wrap(a))
}

/// Infallible variant for values already known to be finite.
pub(crate) fn wrap(a: f64) -> f64 {
    let mut r = a.rem_euclid(TWO_PI);
    if r > PI {
        r -= TWO_PI;
    }
    // rem_euclid maps -pi to pi already; this catches the remaining edge where
    // rounding leaves r == -pi.
    if r <= -PI {
        r += TWO_PI;
    }
    r
}

/// An object pose in SE(2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 { x, y, theta: wrap(theta) }
    }

    pub fn try_new(x: f64, y: f64, theta: f64) -> Result<Self, GeometryError> {
        for v in [x, y, theta] {
            if !v.is_finite() {
                return Err(GeometryError::NonFinite(v));
            }
        }
        Ok(Pose2::new(x, y, theta))
    }

    /// Chart coordinates with the pose's own (wrapped) angle.
    pub fn chart(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn from_chart(p: &Vector3<f64>) -> Self {
        Pose2::new(p[0], p[1], p[2])
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Weighted product metric `dx^2 + dy^2 + w dtheta^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Se2Metric {
    pub w: f64,
}

impl Default for Se2Metric {
    fn default() -> Self {
        Se2Metric { w: 1.0 }
    }
}

impl Se2Metric {
    pub fn new(w: f64) -> Result<Self, GeometryError> {
        if !(w.is_finite() && w > 0.0) {
            return Err(GeometryError::Malformed(format!("metric weight must be positive, got {w}")));
        }
        Ok(Se2Metric { w })
    }

    pub fn distance(&self, a: &Pose2, b: &Pose2) -> f64 {
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        // |a - b| is exactly symmetric in floating point, wrap(b - a) is not.
        let dt = wrap((a.theta - b.theta).abs()).abs();
        (dx * dx + dy * dy + self.w * dt * dt).sqrt()
    }
}

/// Geodesic distance under the default metric (w = 1).
pub fn distance(a: &Pose2, b: &Pose2) -> f64 {
    Se2Metric::default().distance(a, b)
}

/// Geodesic interpolation: straight line in position, shortest arc in angle.
pub fn interpolate(a: &Pose2, b: &Pose2, s: f64) -> Result<Pose2, GeometryError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(GeometryError::ParameterOutOfRange(s));
    }
    Ok(lerp_pose(a, b, s))
}

pub(crate) fn lerp_pose(a: &Pose2, b: &Pose2, s: f64) -> Pose2 {
    if s == 1.0 {
        return *b;
    }
    let dt = wrap(b.theta - a.theta);
    Pose2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y), a.theta + s * dt)
}

/// Axis-aligned bounds in chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl ChartBox {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        ChartBox { lo, hi }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|k| (self.hi[k] - self.lo[k]).max(0.0)).product()
    }

    pub fn contains_chart(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        Vector3::new(
            rng.gen_range(self.lo[0]..=self.hi[0]),
            rng.gen_range(self.lo[1]..=self.hi[1]),
            rng.gen_range(self.lo[2]..=self.hi[2]),
        )
    }

    pub fn to_polytope(&self) -> HPolytope {
        HPolytope::from_box(self.lo, self.hi)
    }
}

/// Bounded intersection of half-spaces `normals[i] . p <= offsets[i]` in the
/// (x, y, theta) chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPolytope {
    pub normals: Vec<[f64; 3]>,
    pub offsets: Vec<f64>,
}

/// Membership slack for boundary points.
pub const CONTAINMENT_TOL: f64 = 1e-9;
/// Artificial bound used to detect unbounded directions.
const BIG: f64 = 1e3;

impl HPolytope {
    pub fn new(normals: Vec<[f64; 3]>, offsets: Vec<f64>) -> Result<Self, GeometryError> {
        if normals.len() != offsets.len() {
            return Err(GeometryError::Malformed(format!(
                "{} normals but {} offsets",
                normals.len(),
                offsets.len()
            )));
        }
        for v in normals.iter().flatten().chain(offsets.iter()) {
            if !v.is_finite() {
                return Err(GeometryError::NonFinite(*v));
            }
        }
        Ok(HPolytope { normals, offsets })
    }

    pub fn from_box(lo: [f64; 3], hi: [f64; 3]) -> Self {
        let mut normals = Vec::with_capacity(6);
        let mut offsets = Vec::with_capacity(6);
        for k in 0..3 {
            let mut n = [0.0; 3];
            n[k] = 1.0;
            normals.push(n);
            offsets.push(hi[k]);
            let mut n = [0.0; 3];
            n[k] = -1.0;
            normals.push(n);
            offsets.push(-lo[k]);
        }
        HPolytope { normals, offsets }
    }

    pub fn num_faces(&self) -> usize {
        self.normals.len()
    }

    pub fn push(&mut self, normal: [f64; 3], offset: f64) {
        self.normals.push(normal);
        self.offsets.push(offset);
    }

    /// Largest violation `max(n . p - b)` (negative when strictly inside).
    pub fn max_violation(&self, p: &Vector3<f64>) -> f64 {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(n, b)| n[0] * p[0] + n[1] * p[1] + n[2] * p[2] - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains_chart(&self, p: &Vector3<f64>) -> bool {
        self.max_violation(p) <= CONTAINMENT_TOL
    }

    /// Chart point for `q` whose angle is shifted by a multiple of 2 pi into
    /// this polytope, if any shift lands inside.
    pub fn chart_point_for(&self, q: &Pose2) -> Option<Vector3<f64>> {
        let mut best: Option<(f64, Vector3<f64>)> = None;
        for k in [0i32, 1, -1, 2, -2] {
            let p = Vector3::new(q.x, q.y, q.theta + TWO_PI * k as f64);
            let v = self.max_violation(&p);
            if v <= CONTAINMENT_TOL && best.map_or(true, |(bv, _)| v < bv) {
                best = Some((v, p));
            }
        }
        best.map(|(_, p)| p)
    }

    pub fn contains(&self, q: &Pose2) -> bool {
        self.chart_point_for(q).is_some()
    }

    /// Copy with the angular coordinate shifted by `shift` (chart re-labelling).
    pub fn shifted_theta(&self, shift: f64) -> HPolytope {
        let offsets = self
            .normals
            .iter()
            .zip(&self.offsets)
            .map(|(n, b)| b + n[2] * shift)
            .collect();
        HPolytope {
            normals: self.normals.clone(),
            offsets,
        }
    }

    /// Stacks both constraint sets in the current chart.
    pub fn stacked(&self, other: &HPolytope) -> HPolytope {
        let mut out = self.clone();
        out.normals.extend_from_slice(&other.normals);
        out.offsets.extend_from_slice(&other.offsets);
        out
    }

    fn matrix(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.num_faces();
        let a = DMatrix::from_fn(m, 3, |i, j| self.normals[i][j]);
        let b = DVector::from_column_slice(&self.offsets);
        (a, b)
    }

    /// Chebyshev center and radius. A negative radius means the polytope is
    /// empty; a radius of (numerically) zero means it is flat or a single point.
    pub fn chebyshev_center(&self) -> Result<(Vector3<f64>, f64), GeometryError> {
        let m = self.num_faces();
        if m == 0 {
            return Err(GeometryError::Unbounded);
        }
        // Variables (x, y, theta, r); maximize r. The artificial box keeps the
        // LP bounded even for malformed inputs.
        let rows = m + 7;
        let mut a = DMatrix::zeros(rows, 4);
        let mut b = DVector::zeros(rows);
        for i in 0..m {
            let n = self.normals[i];
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            for j in 0..3 {
                a[(i, j)] = n[j];
            }
            a[(i, 3)] = norm;
            b[i] = self.offsets[i];
        }
        for k in 0..3 {
            a[(m + 2 * k, k)] = 1.0;
            b[m + 2 * k] = BIG;
            a[(m + 2 * k + 1, k)] = -1.0;
            b[m + 2 * k + 1] = BIG;
        }
        a[(m + 6, 3)] = -1.0;
        b[m + 6] = BIG;
        let mut g = DVector::zeros(4);
        g[3] = -1.0;
        let sol = QpProblem::linear(g, a, b)?.solve()?;
        let c = Vector3::new(sol.x[0], sol.x[1], sol.x[2]);
        if c.amax() > 0.5 * BIG {
            return Err(GeometryError::Unbounded);
        }
        Ok((c, sol.x[3]))
    }

    /// Nonempty up to `tol` (touching faces count as nonempty).
    pub fn is_nonempty(&self) -> Result<bool, GeometryError> {
        Ok(self.chebyshev_center()?.1 >= -1e-9)
    }

    /// Maximizes `dir . p` over the polytope.
    pub fn support(&self, dir: &Vector3<f64>) -> Result<(f64, Vector3<f64>), GeometryError> {
        let (a0, b0) = self.matrix();
        let m = self.num_faces();
        let mut a = DMatrix::zeros(m + 6, 3);
        let mut b = DVector::zeros(m + 6);
        a.view_mut((0, 0), (m, 3)).copy_from(&a0);
        b.rows_mut(0, m).copy_from(&b0);
        for k in 0..3 {
            a[(m + 2 * k, k)] = 1.0;
            b[m + 2 * k] = BIG;
            a[(m + 2 * k + 1, k)] = -1.0;
            b[m + 2 * k + 1] = BIG;
        }
        let g = DVector::from_column_slice(&[-dir[0], -dir[1], -dir[2]]);
        let sol = QpProblem::linear(g, a, b)?.solve()?;
        let p = Vector3::new(sol.x[0], sol.x[1], sol.x[2]);
        if p.amax() > 0.5 * BIG {
            return Err(GeometryError::Unbounded);
        }
        Ok((dir.dot(&p), p))
    }

    /// Tight axis-aligned bounding box. Fails on empty or unbounded input.
    pub fn bounding_box(&self) -> Result<ChartBox, GeometryError> {
        if !self.is_nonempty()? {
            return Err(GeometryError::Empty);
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = 1.0;
            hi[k] = self.support(&e)?.0;
            lo[k] = -self.support(&(-e))?.0;
        }
        Ok(ChartBox { lo, hi })
    }

    /// `(min theta, max theta)` over the polytope.
    pub fn theta_range(&self) -> Result<(f64, f64), GeometryError> {
        let e = Vector3::new(0.0, 0.0, 1.0);
        let hi = self.support(&e)?.0;
        let lo = -self.support(&(-e))?.0;
        Ok((lo, hi))
    }

    /// Uniform sample by rejection from `bbox`; `None` after `max_tries`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, bbox: &ChartBox, rng: &mut R, max_tries: usize) -> Option<Vector3<f64>> {
        for _ in 0..max_tries {
            let p = bbox.sample(rng);
            if self.contains_chart(&p) {
                return Some(p);
            }
        }
        None
    }
}

/// Geodesic convexity of a chart polytope: Euclidean convexity plus an
/// angular extent strictly below pi.
pub fn check_geodesic_convexity(p: &HPolytope) -> Result<bool, GeometryError> {
    let bbox = p.bounding_box()?;
    // The LP extents are accurate to ~1e-10; widths within 1e-8 of pi count as pi.
    Ok(bbox.hi[2] - bbox.lo[2] < PI - 1e-8)
}

/// Shift (a multiple of 2 pi) to apply to `b`'s angle so that its angular
/// support overlaps `a`'s, or `None` if no shift does.
pub fn theta_alignment(a: (f64, f64), b: (f64, f64)) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for k in -2i32..=2 {
        let s = TWO_PI * k as f64;
        let overlap = a.1.min(b.1 + s) - a.0.max(b.0 + s);
        if overlap >= -1e-9 && best.map_or(true, |(o, _)| overlap > o) {
            best = Some((overlap, s));
        }
    }
    best.map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0).unwrap(), -PI / 2.0, epsilon = 1e-15);
        assert_eq!(wrap_angle(PI).unwrap(), PI);
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn distance_examples() {
        let a = Pose2::new(1.0, 2.0, 0.0);
        assert_eq!(distance(&a, &a), 0.0);
        assert_abs_diff_eq!(distance(&a, &Pose2::new(4.0, 6.0, 0.0)), 5.0, epsilon = 1e-15);
        let d = distance(&Pose2::new(0.0, 0.0, 3.0), &Pose2::new(0.0, 0.0, -3.0));
        assert_abs_diff_eq!(d, 2.0 * PI - 6.0, epsilon = 1e-12);
        assert_eq!(Se2Metric::default().w, 1.0);
        assert!(Se2Metric::new(0.0).is_err());
    }

    #[test]
    fn interpolate_examples() {
        let a = Pose2::new(0.0, 0.0, 3.0);
        let b = Pose2::new(0.0, 0.0, -3.0);
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), b);
        let mid = interpolate(&a, &b, 0.5).unwrap();
        assert_abs_diff_eq!(mid.theta.abs(), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(distance(&a, &mid), distance(&mid, &b), epsilon = 1e-12);
        let q = interpolate(&Pose2::new(0.0, 0.0, 0.0), &Pose2::new(2.0, 0.0, 0.0), 0.25).unwrap();
        assert_abs_diff_eq!(q.x, 0.5, epsilon = 1e-15);
        assert!(interpolate(&a, &b, 1.5).is_err());
        assert!(interpolate(&a, &b, -0.1).is_err());
    }

    #[test]
    fn containment_examples() {
        let unit = HPolytope::from_box([-1.0; 3], [1.0; 3]);
        assert!(unit.contains(&Pose2::new(0.0, 0.0, 0.0)));
        assert!(!unit.contains(&Pose2::new(2.0, 0.0, 0.0)));
        let seam = HPolytope::from_box([-1.0, -1.0, 3.0], [1.0, 1.0, 3.3]);
        let q = Pose2::new(0.0, 0.0, -3.1);
        let p = seam.chart_point_for(&q).expect("inside via +2pi");
        assert_abs_diff_eq!(p[2], -3.1 + 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn convexity_examples() {
        let narrow = HPolytope::from_box([0.0, 0.0, 0.0], [1.0, 1.0, 0.5]);
        assert!(check_geodesic_convexity(&narrow).unwrap());
        let wide = HPolytope::from_box([0.0, 0.0, 0.0], [1.0, 1.0, 3.2]);
        assert!(!check_geodesic_convexity(&wide).unwrap());
        let exact = HPolytope::from_box([0.0, 0.0, 0.0], [1.0, 1.0, PI]);
        assert!(!check_geodesic_convexity(&exact).unwrap());
        let mut open = HPolytope::from_box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        open.normals.remove(0);
        open.offsets.remove(0);
        assert!(matches!(check_geodesic_convexity(&open), Err(GeometryError::Unbounded)));
    }

    #[test]
    fn chebyshev_detects_empty_and_touching() {
        let a = HPolytope::from_box([-1.0; 3], [1.0; 3]);
        let b = HPolytope::from_box([1.0, -1.0, -1.0], [3.0, 1.0, 1.0]);
        let c = HPolytope::from_box([1.5, -1.0, -1.0], [3.0, 1.0, 1.0]);
        assert!(a.stacked(&b).is_nonempty().unwrap());
        assert!(!a.stacked(&c).is_nonempty().unwrap());
        let (center, r) = a.chebyshev_center().unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-7);
        assert!(center.amax() < 1e-6);
    }

    #[test]
    fn json_shape() {
        let p = HPolytope::from_box([0.0; 3], [1.0; 3]);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.starts_with("{\"normals\":[[1.0,0.0,0.0]"));
        let back: HPolytope = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    fn pose() -> impl Strategy<Value = Pose2> {
        (-5.0..5.0f64, -5.0..5.0f64, -10.0..10.0f64).prop_map(|(x, y, t)| Pose2::new(x, y, t))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn metric_axioms(a in pose(), b in pose(), c in pose()) {
            let dab = distance(&a, &b);
            prop_assert_eq!(dab, distance(&b, &a));
            prop_assert!(dab >= 0.0);
            prop_assert!(distance(&a, &c) <= dab + distance(&b, &c) + 1e-12);
        }

        #[test]
        fn wrap_idempotent(a in -100.0..100.0f64) {
            let w = wrap(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap(w), w);
            let k = ((a - w) / TWO_PI).round();
            prop_assert!((a - w - k * TWO_PI).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn interpolation_is_metric_linear(a in pose(), b in pose(), s in 0.0..=1.0f64) {
            let q = interpolate(&a, &b, s).unwrap();
            prop_assert!((distance(&a, &q) - s * distance(&a, &b)).abs() < 1e-9);
        }

        #[test]
        fn convex_polytopes_contain_geodesics(
            lo in (0.0..0.5f64, 0.0..0.5f64, -4.0..3.0f64),
            ext in (0.1..0.5f64, 0.1..0.5f64, 0.1..3.0f64),
            u in (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64),
            v in (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64),
            cut in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
        ) {
            let lo = [lo.0, lo.1, lo.2];
            let hi = [lo[0] + ext.0, lo[1] + ext.1, lo[2] + ext.2];
            let mut p = HPolytope::from_box(lo, hi);
            // An extra oblique face through the box center keeps the shape non-trivial.
            let mid = Vector3::new(0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2]));
            let n = Vector3::new(cut.0, cut.1, cut.2);
            if n.norm() > 1e-3 {
                p.push([n[0], n[1], n[2]], n.dot(&mid) + 0.05 * n.norm());
            }
            prop_assume!(check_geodesic_convexity(&p).unwrap());
            let pick = |w: (f64, f64, f64)| Vector3::new(
                lo[0] + w.0 * ext.0, lo[1] + w.1 * ext.1, lo[2] + w.2 * ext.2);
            let (pa, pb) = (pick(u), pick(v));
            prop_assume!(p.contains_chart(&pa) && p.contains_chart(&pb));
            let (a, b) = (Pose2::from_chart(&pa), Pose2::from_chart(&pb));
            for k in 0..=20 {
                let q = interpolate(&a, &b, k as f64 / 20.0).unwrap();
                prop_assert!(p.contains(&q));
            }
        }
    }
}
