//! Mutual reachable sets of the transfer planner around a seed grasp: a
//! per-cell forward/backward rollout over a grid of object space, and a
//! sampled counterexample loop that carves a convex polytope out of the
//! mutual cells.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::planners::{transfer_plan, TransferParams};
use crate::se2::{ChartBox, GeometryError, HPolytope, Pose2};
use crate::system::{carried_fingertips, current_grasp, first_violation, ik_near, is_grasped, GraspSpec, PairMask, SystemConfig, WorldParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReachError {
    #[error("seed configuration is not grasping the object")]
    NotGrasped,
    #[error("mutual set is empty")]
    EmptyMutual,
    #[error("transfer planner did not reach the requested pose (error {0:.4})")]
    NotReached(f64),
    #[error("no collision-free grasp of the set at the requested pose")]
    GraspFailed,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Regular grid over an object-space box. When the angular extent is a full
/// turn the angle axis wraps around.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub delta: [f64; 3],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl GridSpec {
    pub fn new(delta: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Self {
        GridSpec { delta, lo, hi }
    }

    pub fn for_world(world: &WorldParams, delta: [f64; 3]) -> Self {
        GridSpec { delta, lo: world.workspace.lo(), hi: world.workspace.hi() }
    }

    pub fn dims(&self) -> [usize; 3] {
        std::array::from_fn(|k| (((self.hi[k] - self.lo[k]) / self.delta[k]) - 1e-9).ceil().max(1.0) as usize)
    }

    pub fn cell_size(&self) -> [f64; 3] {
        let d = self.dims();
        std::array::from_fn(|k| (self.hi[k] - self.lo[k]) / d[k] as f64)
    }

    pub fn num_cells(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn periodic_theta(&self) -> bool {
        self.hi[2] - self.lo[2] >= 2.0 * PI - 1e-9
    }

    pub fn linear(&self, idx: [usize; 3]) -> usize {
        let d = self.dims();
        (idx[0] * d[1] + idx[1]) * d[2] + idx[2]
    }

    pub fn unlinear(&self, i: usize) -> [usize; 3] {
        let d = self.dims();
        [i / (d[1] * d[2]), (i / d[2]) % d[1], i % d[2]]
    }

    /// Unclamped integer cell coordinates of a chart point.
    fn raw_index(&self, p: &Vector3<f64>) -> [i64; 3] {
        let s = self.cell_size();
        std::array::from_fn(|k| ((p[k] - self.lo[k]) / s[k]).floor() as i64)
    }

    fn wrap_index(&self, raw: [i64; 3]) -> Option<usize> {
        let d = self.dims();
        let mut idx = [0usize; 3];
        for k in 0..3 {
            let mut v = raw[k];
            if k == 2 && self.periodic_theta() {
                v = v.rem_euclid(d[2] as i64);
            } else if v == d[k] as i64 {
                // closed upper boundary belongs to the last cell
                v -= 1;
            }
            if v < 0 || v >= d[k] as i64 {
                return None;
            }
            idx[k] = v as usize;
        }
        Some(self.linear(idx))
    }

    /// Cell containing a chart point (angle may be in any chart).
    pub fn cell_of_chart(&self, p: &Vector3<f64>) -> Option<usize> {
        let mut q = *p;
        if self.periodic_theta() {
            q[2] = self.lo[2] + (q[2] - self.lo[2]).rem_euclid(2.0 * PI);
        }
        self.wrap_index(self.raw_index(&q))
    }

    pub fn cell_of(&self, q: &Pose2) -> Option<usize> {
        self.cell_of_chart(&q.chart())
    }

    pub fn center(&self, i: usize) -> Pose2 {
        let idx = self.unlinear(i);
        let s = self.cell_size();
        Pose2::new(
            self.lo[0] + (idx[0] as f64 + 0.5) * s[0],
            self.lo[1] + (idx[1] as f64 + 0.5) * s[1],
            self.lo[2] + (idx[2] as f64 + 0.5) * s[2],
        )
    }

    pub fn cell_box(&self, i: usize) -> ChartBox {
        let idx = self.unlinear(i);
        let s = self.cell_size();
        let lo: [f64; 3] = std::array::from_fn(|k| self.lo[k] + idx[k] as f64 * s[k]);
        let hi: [f64; 3] = std::array::from_fn(|k| lo[k] + s[k]);
        ChartBox::new(lo, hi)
    }
}

/// Fixed-size bitset over grid cells, serialised as run lengths of
/// alternating clear/set bits starting with clear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    bits: Vec<bool>,
}

impl CellSet {
    pub fn new(len: usize) -> Self {
        CellSet { bits: vec![false; len] }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> bool) -> Self {
        CellSet { bits: (0..len).map(f).collect() }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    pub fn and(&self, other: &CellSet) -> CellSet {
        CellSet { bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect() }
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut cur = false;
        let mut n = 0;
        for &b in &self.bits {
            if b == cur {
                n += 1;
            } else {
                runs.push(n);
                cur = b;
                n = 1;
            }
        }
        runs.push(n);
        runs
    }

    pub fn from_runs(len: usize, runs: &[usize]) -> Result<Self, String> {
        let mut bits = Vec::with_capacity(len);
        for (k, &r) in runs.iter().enumerate() {
            bits.extend(std::iter::repeat(k % 2 == 1).take(r));
        }
        if bits.len() != len {
            return Err(format!("runs cover {} cells, expected {len}", bits.len()));
        }
        Ok(CellSet { bits })
    }
}

#[derive(Serialize, Deserialize)]
struct CellSetRepr {
    len: usize,
    runs: Vec<usize>,
}

impl Serialize for CellSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CellSetRepr { len: self.len(), runs: self.runs() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CellSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = CellSetRepr::deserialize(d)?;
        CellSet::from_runs(r.len, &r.runs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMRS {
    pub grid: GridSpec,
    pub forward: CellSet,
    pub backward: CellSet,
    pub mutual: CellSet,
    pub seed: SystemConfig,
    pub grasp: GraspSpec,
}

impl DiscreteMRS {
    pub fn contains_chart(&self, p: &Vector3<f64>) -> bool {
        self.grid.cell_of_chart(p).map_or(false, |i| self.mutual.get(i))
    }

    pub fn contains(&self, q: &Pose2) -> bool {
        self.contains_chart(&q.chart())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexMRS {
    pub id: usize,
    pub polytope: HPolytope,
    pub seed: SystemConfig,
    pub grasp: GraspSpec,
    pub discrete: DiscreteMRS,
}

impl ConvexMRS {
    /// A set carrying only its polytope: no reachability data and a
    /// placeholder seed. For graph-level tooling and tests.
    pub fn from_polytope(id: usize, polytope: HPolytope) -> Self {
        let grid = GridSpec::new([1.0; 3], [0.0; 3], [1.0; 3]);
        let empty = CellSet::new(grid.num_cells());
        let seed = SystemConfig { qa: [0.0; 4], qo: Pose2::new(0.0, 0.0, 0.0) };
        let grasp = GraspSpec::new(0.0);
        let discrete = DiscreteMRS { grid, forward: empty.clone(), backward: empty.clone(), mutual: empty, seed, grasp };
        ConvexMRS { id, polytope, seed, grasp, discrete }
    }
}

/// Forward and backward reachability of every cell center from the seed.
/// Cells are independent, so they are evaluated in parallel; the result does
/// not depend on evaluation order.
pub fn compute_discrete_mrs(world: &WorldParams, pi: &TransferParams, seed: &SystemConfig, grid: &GridSpec) -> Result<DiscreteMRS, ReachError> {
    if !is_grasped(world, seed) {
        return Err(ReachError::NotGrasped);
    }
    let n = grid.num_cells();
    let seed_cell = grid.cell_of(&seed.qo);
    let flags: Vec<(bool, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            if Some(i) == seed_cell {
                return (true, true);
            }
            let c = grid.center(i);
            let Ok(fw) = transfer_plan(world, pi, seed, &c, None) else { return (false, false) };
            if !(fw.reached && grid.cell_of(&fw.last().qo) == Some(i)) {
                return (false, false);
            }
            let back = transfer_plan(world, pi, fw.last(), &seed.qo, None).map_or(false, |b| b.reached);
            (true, back)
        })
        .collect();
    let forward = CellSet::from_fn(n, |i| flags[i].0);
    let backward = CellSet::from_fn(n, |i| flags[i].1);
    let mutual = forward.and(&backward);
    Ok(DiscreteMRS { grid: *grid, forward, backward, mutual, seed: *seed, grasp: current_grasp(world, seed) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflateParams {
    pub eps: f64,
    /// Samples per round.
    pub budget: usize,
    pub max_faces: usize,
}

impl Default for InflateParams {
    fn default() -> Self {
        InflateParams { eps: 0.01, budget: 2000, max_faces: 40 }
    }
}

/// Angular width of the inflation window; strictly below pi.
const THETA_WINDOW: f64 = PI - 0.05;

/// Starting region: the grid box, with the angle restricted to a window of
/// width below pi centred on the seed.
fn inflation_domain(d: &DiscreteMRS) -> HPolytope {
    let g = &d.grid;
    let th = d.seed.qo.theta;
    let (tlo, thi) = if g.periodic_theta() {
        (th - THETA_WINDOW / 2.0, th + THETA_WINDOW / 2.0)
    } else {
        // Place the seed angle in the grid's chart first.
        let mut t = th;
        while t < g.lo[2] {
            t += 2.0 * PI;
        }
        while t > g.hi[2] {
            t -= 2.0 * PI;
        }
        ((t - THETA_WINDOW / 2.0).max(g.lo[2]), (t + THETA_WINDOW / 2.0).min(g.hi[2]))
    };
    HPolytope::from_box([g.lo[0], g.lo[1], tlo], [g.hi[0], g.hi[1], thi])
}

fn seed_chart(d: &DiscreteMRS, domain: &HPolytope) -> Vector3<f64> {
    domain.chart_point_for(&d.seed.qo).unwrap_or_else(|| d.seed.qo.chart())
}

type Plane = ([f64; 3], f64);

fn side(pl: &Plane, p: &Vector3<f64>) -> f64 {
    pl.0[0] * p[0] + pl.0[1] * p[1] + pl.0[2] * p[2] - pl.1
}

/// Candidate separating half-spaces for a counterexample `x`, all with
/// normals pointing from the seed toward `x`: the faces of `x`'s cell that
/// look back at the seed, and a plane perpendicular to the seed ray where it
/// first leaves the mutual cells.
fn cut_candidates(d: &DiscreteMRS, seed: &Vector3<f64>, x: &Vector3<f64>) -> Vec<Plane> {
    let g = &d.grid;
    let size = g.cell_size();
    let is = g.raw_index(seed);
    let ix = g.raw_index(x);
    let mut out = Vec::with_capacity(4);
    for k in 0..3 {
        let mut n = [0.0; 3];
        if ix[k] > is[k] {
            n[k] = 1.0;
            out.push((n, g.lo[k] + ix[k] as f64 * size[k]));
        } else if ix[k] < is[k] {
            n[k] = -1.0;
            out.push((n, -(g.lo[k] + (ix[k] + 1) as f64 * size[k])));
        }
    }
    let dir = x - seed;
    let len = dir.norm();
    if len > 1e-12 {
        let min_size = size.iter().cloned().fold(f64::INFINITY, f64::min);
        let steps = ((len / (min_size / 32.0)).ceil() as usize).max(2);
        let mut prev = *seed;
        for k in 1..=steps {
            let p = seed + dir * (k as f64 / steps as f64);
            if !d.contains_chart(&p) {
                let (mut a, mut b) = (prev, p);
                for _ in 0..40 {
                    let m = (a + b) * 0.5;
                    if d.contains_chart(&m) {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let u = dir / len;
                out.push(([u[0], u[1], u[2]], u.dot(&a)));
                break;
            }
            prev = p;
        }
    }
    // Keep only planes that separate x from the seed.
    out.retain(|pl| side(pl, seed) < 0.0 && side(pl, x) > 0.0);
    out
}

/// Uniform samples of `poly`, split into mutual and non-mutual points.
fn split_samples(d: &DiscreteMRS, poly: &HPolytope, n: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>), ReachError> {
    let bbox = poly.bounding_box()?;
    let mut good = Vec::new();
    let mut bad = Vec::new();
    let mut tries = 0usize;
    while good.len() + bad.len() < n && tries < 1000 * n {
        tries += 1;
        let p = bbox.sample(rng);
        if !poly.contains_chart(&p) {
            continue;
        }
        if d.contains_chart(&p) {
            good.push(p);
        } else {
            bad.push(p);
        }
    }
    Ok((good, bad))
}

fn bad_fraction(good: &[Vector3<f64>], bad: &[Vector3<f64>]) -> f64 {
    let n = good.len() + bad.len();
    if n == 0 {
        0.0
    } else {
        bad.len() as f64 / n as f64
    }
}

/// Counterexample-driven inflation of a convex polytope inside the mutual
/// cells. Each round draws `budget` samples of the current polytope; every
/// counterexample still inside is cut off by whichever candidate half-space
/// loses the fewest sampled mutual points. Stops once a round finds at most
/// an `eps` fraction outside, or the face budget is spent.
pub fn inflate_polytope(d: &DiscreteMRS, params: &InflateParams, rng: &mut ChaCha8Rng) -> Result<HPolytope, ReachError> {
    if d.mutual.count() == 0 {
        return Err(ReachError::EmptyMutual);
    }
    let mut poly = inflation_domain(d);
    let base_faces = poly.num_faces();
    let seed = seed_chart(d, &poly);
    loop {
        let (mut good, mut bad) = split_samples(d, &poly, params.budget, rng)?;
        if bad_fraction(&good, &bad) <= params.eps || poly.num_faces() - base_faces >= params.max_faces {
            break;
        }
        bad.sort_by(|a, b| (a - seed).norm().total_cmp(&(b - seed).norm()));
        let mut added = 0;
        let mut i = 0;
        while i < bad.len() {
            let x = bad[i];
            i += 1;
            let best = cut_candidates(d, &seed, &x)
                .into_iter()
                .map(|pl| {
                    let lost = good.iter().filter(|p| side(&pl, p) > 0.0).count();
                    let gained = bad.iter().filter(|p| side(&pl, p) > 0.0).count();
                    (lost as f64 - 0.5 * gained as f64, pl)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let Some((_, pl)) = best else { continue };
            poly.push(pl.0, pl.1);
            good.retain(|p| side(&pl, p) <= 0.0);
            bad.retain(|p| side(&pl, p) <= 0.0);
            i = 0;
            added += 1;
            if poly.num_faces() - base_faces >= params.max_faces {
                break;
            }
        }
        if added == 0 {
            break;
        }
    }
    Ok(poly)
}

/// Fraction of `n` polytope samples whose cell is not mutual.
pub fn outside_fraction(d: &DiscreteMRS, poly: &HPolytope, n: usize, rng: &mut ChaCha8Rng) -> Result<f64, ReachError> {
    let (good, bad) = split_samples(d, poly, n, rng)?;
    Ok(bad_fraction(&good, &bad))
}

pub fn build_convex_mrs(
    world: &WorldParams,
    pi: &TransferParams,
    seed: &SystemConfig,
    grid: &GridSpec,
    inflate: &InflateParams,
    id: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ConvexMRS, ReachError> {
    let discrete = compute_discrete_mrs(world, pi, seed, grid)?;
    let polytope = inflate_polytope(&discrete, inflate, rng)?;
    Ok(ConvexMRS { id, polytope, seed: *seed, grasp: discrete.grasp, discrete })
}

/// Full configuration for `qo` reached by carrying the object out from the
/// set's seed.
pub fn inverse_project(world: &WorldParams, pi: &TransferParams, qo: &Pose2, m: &ConvexMRS) -> Result<SystemConfig, ReachError> {
    let r = transfer_plan(world, pi, &m.seed, qo, None).map_err(|_| ReachError::NotGrasped)?;
    if r.reached {
        Ok(*r.last())
    } else {
        Err(ReachError::NotReached(r.final_error))
    }
}

/// A configuration holding the object exactly at `qo` with the set's grasp:
/// the inverse projection's finger placement, carried onto `qo` and solved
/// on the same elbow branches.
pub fn grasp_in_set(world: &WorldParams, pi: &TransferParams, qo: &Pose2, m: &ConvexMRS) -> Result<SystemConfig, ReachError> {
    let r = inverse_project(world, pi, qo, m)?;
    let tips = carried_fingertips(world, &r, qo);
    let qa = ik_near(world, &tips, &r.qa).ok_or(ReachError::GraspFailed)?;
    let c = SystemConfig { qa, qo: *qo };
    if !is_grasped(world, &c) || first_violation(world, &c, PairMask::ALL, 0.0).is_some() {
        return Err(ReachError::GraspFailed);
    }
    Ok(c)
}

/// Whether `a` and `b` reach each other through the seed, starting from
/// their inverse projections.
pub fn mutually_reachable(world: &WorldParams, pi: &TransferParams, m: &ConvexMRS, a: &Pose2, b: &Pose2) -> bool {
    let seed = m.seed.qo;
    let one_way = |from: &Pose2, to: &Pose2| {
        let Ok(qa) = inverse_project(world, pi, from, m) else { return false };
        transfer_plan(world, pi, &qa, to, Some(&seed)).map_or(false, |r| r.reached)
    };
    one_way(a, b) && one_way(b, a)
}

/// Draws a uniformly random cell center from the mutual set.
pub fn sample_mutual_center(d: &DiscreteMRS, rng: &mut impl Rng) -> Option<Pose2> {
    let cells: Vec<usize> = d.mutual.iter_ones().collect();
    if cells.is_empty() {
        return None;
    }
    Some(d.grid.center(cells[rng.gen_range(0..cells.len())]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{generate_grasp, Obstacle};
    use rand::SeedableRng;

    fn seeded(world: &WorldParams, qo: Pose2) -> SystemConfig {
        generate_grasp(world, &qo, &GraspSpec::new(PI / 2.0)).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let w = WorldParams::default();
        let g = GridSpec::for_world(&w, [0.2; 3]);
        assert_eq!(g.dims(), [3, 6, 32]);
        assert_eq!(g.num_cells(), 576);
        for i in [0, 17, 575] {
            assert_eq!(g.cell_of(&g.center(i)), Some(i));
            assert_eq!(g.linear(g.unlinear(i)), i);
        }
        // angle wraps onto the grid
        let c = g.center(5);
        let shifted = Vector3::new(c.x, c.y, c.theta + 2.0 * PI);
        assert_eq!(g.cell_of_chart(&shifted), Some(5));
        assert_eq!(g.cell_of(&Pose2::new(2.0, 0.0, 0.0)), None);
    }

    #[test]
    fn cellset_runs_round_trip() {
        let s = CellSet::from_fn(20, |i| (5..9).contains(&i) || i == 19);
        assert_eq!(s.runs(), vec![5, 4, 10, 1]);
        let json = serde_json::to_string(&s).unwrap();
        let back: CellSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let starts_set = CellSet::from_fn(3, |_| true);
        assert_eq!(starts_set.runs(), vec![0, 3]);
        assert!(CellSet::from_runs(4, &[1, 1]).is_err());
    }

    fn small_grid() -> GridSpec {
        GridSpec::new([0.1, 0.1, 0.2], [0.3, -0.2, -0.4], [0.7, 0.2, 0.4])
    }

    #[test]
    fn discrete_mrs_set_algebra() {
        let w = WorldParams { obstacles: vec![], ..WorldParams::default() };
        let seed = seeded(&w, Pose2::new(0.5, 0.0, 0.0));
        let g = small_grid();
        let d = compute_discrete_mrs(&w, &TransferParams::default(), &seed, &g).unwrap();
        assert!(d.mutual.get(g.cell_of(&seed.qo).unwrap()));
        assert!(d.mutual.is_subset(&d.forward) && d.mutual.is_subset(&d.backward));
        assert!(d.backward.is_subset(&d.forward));
        assert!(d.mutual.count() > 1);
        let mut ungrasped = seed;
        ungrasped.qo.x += 0.1;
        assert_eq!(compute_discrete_mrs(&w, &TransferParams::default(), &ungrasped, &g), Err(ReachError::NotGrasped));
    }

    #[test]
    fn blocked_corridor_is_not_forward_reachable() {
        let mut w = WorldParams { obstacles: vec![], ..WorldParams::default() };
        for k in -6..=6 {
            w.obstacles.push(Obstacle { center: [0.62, 0.05 * k as f64], radius: 0.02 });
        }
        let seed = seeded(&w, Pose2::new(0.4, 0.0, 0.0));
        let g = GridSpec::new([0.1, 0.1, 0.2], [0.3, -0.1, -0.1], [0.9, 0.1, 0.1]);
        let d = compute_discrete_mrs(&w, &TransferParams::default(), &seed, &g).unwrap();
        let beyond = g.cell_of(&Pose2::new(0.85, 0.05, 0.0)).unwrap();
        assert!(!d.forward.get(beyond));
        // exhaustive oracle: every far-side cell center is unreachable
        for i in 0..g.num_cells() {
            if g.center(i).x > 0.75 {
                let r = transfer_plan(&w, &TransferParams::default(), &seed, &g.center(i), None).unwrap();
                assert!(!r.reached);
                assert!(!d.forward.get(i));
            }
        }
    }

    fn synthetic(grid: GridSpec, seed_qo: Pose2, mutual: impl Fn(usize) -> bool) -> DiscreteMRS {
        let seed = SystemConfig { qa: [0.0; 4], qo: seed_qo };
        let n = grid.num_cells();
        let m = CellSet::from_fn(n, mutual);
        DiscreteMRS { grid, forward: m.clone(), backward: m.clone(), mutual: m, seed, grasp: GraspSpec::new(0.0) }
    }

    #[test]
    fn inflation_of_full_box() {
        let g = GridSpec::new([0.1, 0.1, 0.2], [0.0, 0.0, -1.0], [0.5, 0.5, 1.0]);
        let d = synthetic(g, Pose2::new(0.25, 0.25, 0.0), |_| true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = inflate_polytope(&d, &InflateParams::default(), &mut rng).unwrap();
        let bbox = ChartBox::new(g.lo, g.hi);
        let inside = (0..20000).filter(|_| p.contains_chart(&bbox.sample(&mut rng))).count();
        assert!(inside as f64 / 20000.0 >= 0.9);
    }

    #[test]
    fn inflation_of_single_cell() {
        let g = GridSpec::new([0.1, 0.1, 0.2], [0.0, 0.0, -1.0], [0.5, 0.5, 1.0]);
        let seed = Pose2::new(0.23, 0.27, 0.1);
        let cell = g.cell_of(&seed).unwrap();
        let d = synthetic(g, seed, |i| i == cell);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = inflate_polytope(&d, &InflateParams::default(), &mut rng).unwrap();
        let bb = p.bounding_box().unwrap();
        let cb = g.cell_box(cell);
        for k in 0..3 {
            assert!(bb.lo[k] >= cb.lo[k] - g.delta[k] - 1e-9 && bb.hi[k] <= cb.hi[k] + g.delta[k] + 1e-9);
        }
        assert!(p.contains(&seed));
    }

    #[test]
    fn inflation_is_eps_correct_on_l_shape() {
        let g = GridSpec::new([0.1, 0.1, 0.2], [0.0, 0.0, -1.0], [0.6, 0.6, 1.0]);
        let d = synthetic(g, Pose2::new(0.15, 0.15, 0.0), |i| {
            let c = g.center(i);
            c.x < 0.3 || c.y < 0.3
        });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = inflate_polytope(&d, &InflateParams::default(), &mut rng).unwrap();
        assert!(outside_fraction(&d, &p, 10_000, &mut rng).unwrap() <= 0.02);
        assert!(crate::se2::check_geodesic_convexity(&p).unwrap());
    }

    #[test]
    fn empty_mutual_rejected() {
        let g = GridSpec::new([0.1, 0.1, 0.2], [0.0, 0.0, -1.0], [0.5, 0.5, 1.0]);
        let d = synthetic(g, Pose2::new(0.25, 0.25, 0.0), |_| false);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(inflate_polytope(&d, &InflateParams::default(), &mut rng), Err(ReachError::EmptyMutual));
    }

    #[test]
    fn inverse_projection_of_seed_is_seed() {
        let w = WorldParams::default();
        let seed = seeded(&w, Pose2::new(0.5, 0.0, 0.0));
        let g = small_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = build_convex_mrs(&w, &TransferParams::default(), &seed, &g, &InflateParams::default(), 0, &mut rng).unwrap();
        assert_eq!(inverse_project(&w, &TransferParams::default(), &seed.qo, &m).unwrap(), seed);
        let json = serde_json::to_string(&m).unwrap();
        let back: ConvexMRS = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
