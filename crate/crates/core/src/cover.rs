//! Approximate object-space cover: seed a mutual reachable set from an
//! uncovered pose, inflate it, repeat until a fixed sample panel is covered
//! to the requested fraction.
//!
//! The covered domain is the part of the workspace box where at least one
//! candidate grasp exists. Poses no grasp can hold cannot belong to any set,
//! so they are left out of the coverage ratio.

use std::f64::consts::PI;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planners::TransferParams;
use crate::reach::{build_convex_mrs, ConvexMRS, GridSpec, InflateParams};
use crate::se2::{ChartBox, Pose2};
use crate::system::{generate_grasp, GraspSpec, SystemConfig, WorldParams};

/// Rejection-sampling budget for uncovered poses.
pub const MAX_UNCOVERED_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("no uncovered pose found in {0} attempts")]
    SamplingExhausted(usize),
    #[error("invalid cover parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverParams {
    pub alpha: f64,
    pub delta: [f64; 3],
    pub mc_samples: usize,
    pub max_sets: usize,
    pub grasp_angles: Vec<f64>,
    pub inflate: InflateParams,
    pub rng_seed: u64,
}

impl Default for CoverParams {
    fn default() -> Self {
        CoverParams {
            alpha: 0.9,
            delta: [0.2; 3],
            mc_samples: 2000,
            max_sets: 25,
            grasp_angles: default_grasp_angles(8),
            inflate: InflateParams::default(),
            rng_seed: 0,
        }
    }
}

impl CoverParams {
    pub fn validate(&self) -> Result<(), CoverError> {
        let bad = |m: &str| Err(CoverError::InvalidParams(m.into()));
        if !(0.0..1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1)");
        }
        if self.mc_samples < 1000 {
            return bad("mc_samples must be at least 1000");
        }
        if self.max_sets < 1 {
            return bad("max_sets must be at least 1");
        }
        if self.delta.iter().any(|d| !(*d > 0.0)) {
            return bad("delta must be positive");
        }
        if self.grasp_angles.is_empty() || self.grasp_angles.iter().any(|a| !a.is_finite()) {
            return bad("grasp_angles must be a nonempty list of finite angles");
        }
        Ok(())
    }
}

/// `n` angles evenly spaced in (-pi, pi], ending at pi.
pub fn default_grasp_angles(n: usize) -> Vec<f64> {
    (1..=n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub sets: Vec<ConvexMRS>,
    pub coverage_history: Vec<f64>,
}

impl Cover {
    pub fn coverage(&self) -> f64 {
        self.coverage_history.last().copied().unwrap_or(0.0)
    }
}

pub fn covered(sets: &[ConvexMRS], q: &Pose2) -> bool {
    sets.iter().any(|m| m.polytope.contains(q))
}

fn workspace_box(world: &WorldParams) -> ChartBox {
    ChartBox::new(world.workspace.lo(), world.workspace.hi())
}

fn uniform_pose(world: &WorldParams, rng: &mut ChaCha8Rng) -> Pose2 {
    Pose2::from_chart(&workspace_box(world).sample(rng))
}

/// First grasp in `angles` order that holds the object at `q`.
pub fn first_grasp(world: &WorldParams, q: &Pose2, angles: &[f64]) -> Option<SystemConfig> {
    angles.iter().find_map(|a| generate_grasp(world, q, &GraspSpec::new(*a)).ok())
}

/// Fraction of `n` uniform workspace poses inside at least one set, with its
/// standard error.
pub fn estimate_coverage(sets: &[ConvexMRS], world: &WorldParams, n: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = n.max(1);
    let hits = (0..n).filter(|_| covered(sets, &uniform_pose(world, rng))).count();
    let p = hits as f64 / n as f64;
    (p, standard_error(p, n))
}

pub fn standard_error(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn sample_uncovered(sets: &[ConvexMRS], world: &WorldParams, rng: &mut ChaCha8Rng) -> Result<Pose2, CoverError> {
    for _ in 0..MAX_UNCOVERED_ATTEMPTS {
        let q = uniform_pose(world, rng);
        if !covered(sets, &q) {
            return Ok(q);
        }
    }
    Err(CoverError::SamplingExhausted(MAX_UNCOVERED_ATTEMPTS))
}

/// Fixed set of graspable poses that every coverage estimate of one cover
/// run is taken on.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub poses: Vec<Pose2>,
}

impl Panel {
    /// Uniform workspace draws, keeping the first `n` that some grasp in
    /// `angles` can hold.
    pub fn draw(world: &WorldParams, angles: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut poses = Vec::with_capacity(n);
        let mut tries = 0usize;
        while poses.len() < n && tries < 1000 * n.max(1) {
            tries += 1;
            let q = uniform_pose(world, rng);
            if first_grasp(world, &q, angles).is_some() {
                poses.push(q);
            }
        }
        Panel { poses }
    }

    pub fn coverage(&self, sets: &[ConvexMRS]) -> f64 {
        if self.poses.is_empty() {
            return 0.0;
        }
        self.poses.iter().filter(|q| covered(sets, q)).count() as f64 / self.poses.len() as f64
    }

    pub fn standard_error(&self, p: f64) -> f64 {
        standard_error(p, self.poses.len().max(1))
    }
}

/// Greedy cover loop. Never fails: a partial cover comes back with its
/// history when the set cap is hit or no uncovered pose can be found.
pub fn build_cover(world: &WorldParams, params: &CoverParams, pi: &TransferParams) -> Cover {
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let panel = Panel::draw(world, &params.grasp_angles, params.mc_samples, &mut rng);
    let grid = GridSpec::for_world(world, params.delta);
    let mut hit = vec![false; panel.poses.len()];
    let mut sets: Vec<ConvexMRS> = Vec::new();
    let mut history = Vec::new();
    let mut coverage = 0.0;
    let mut seed_failures = 0usize;
    while coverage < params.alpha && sets.len() < params.max_sets {
        let Ok(q) = sample_uncovered(&sets, world, &mut rng) else { break };
        let Some(seed) = first_grasp(world, &q, &params.grasp_angles) else {
            seed_failures += 1;
            if seed_failures >= MAX_UNCOVERED_ATTEMPTS {
                break;
            }
            continue;
        };
        let m = match build_convex_mrs(world, pi, &seed, &grid, &params.inflate, sets.len(), &mut rng) {
            Ok(m) => m,
            Err(e) => {
                debug!("seed {q:?} rejected: {e}");
                seed_failures += 1;
                if seed_failures >= MAX_UNCOVERED_ATTEMPTS {
                    break;
                }
                continue;
            }
        };
        for (h, p) in hit.iter_mut().zip(&panel.poses) {
            *h = *h || m.polytope.contains(p);
        }
        sets.push(m);
        coverage = hit.iter().filter(|h| **h).count() as f64 / hit.len().max(1) as f64;
        info!("set {} seeded at {:?}: coverage {coverage:.4}", sets.len() - 1, q);
        history.push(coverage);
    }
    Cover { sets, coverage_history: history }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reach::{CellSet, DiscreteMRS};
    use crate::se2::HPolytope;

    fn box_set(world: &WorldParams, id: usize, lo: [f64; 3], hi: [f64; 3]) -> ConvexMRS {
        let q = Pose2::new(0.5, 0.0, 0.0);
        let seed = first_grasp(world, &q, &default_grasp_angles(8)).unwrap();
        let grid = GridSpec::for_world(world, [0.2; 3]);
        let cells = CellSet::new(grid.num_cells());
        let discrete = DiscreteMRS {
            grid,
            forward: cells.clone(),
            backward: cells.clone(),
            mutual: cells,
            seed,
            grasp: GraspSpec::new(0.0),
        };
        ConvexMRS { id, polytope: HPolytope::from_box(lo, hi), seed, grasp: discrete.grasp, discrete }
    }

    #[test]
    fn default_angles() {
        let a = default_grasp_angles(8);
        assert_eq!(a.len(), 8);
        assert!((a[7] - PI).abs() < 1e-15);
        assert!(a.iter().all(|v| *v > -PI && *v <= PI));
        assert!((a[1] - a[0] - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_estimates() {
        let w = WorldParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(estimate_coverage(&[], &w, 500, &mut rng).0, 0.0);
        let whole = box_set(&w, 0, w.workspace.lo(), w.workspace.hi());
        assert_eq!(estimate_coverage(&[whole], &w, 500, &mut rng), (1.0, 0.0));
        // Two disjoint halves, split at y = 0; each has half the volume.
        let (lo, hi) = (w.workspace.lo(), w.workspace.hi());
        let left = box_set(&w, 0, lo, [hi[0], 0.0, hi[2]]);
        let right = box_set(&w, 1, [lo[0], 1e-12, lo[2]], hi);
        let n = 4000;
        let (p, _) = estimate_coverage(&[left.clone()], &w, n, &mut rng);
        assert!((p - 0.5).abs() <= 3.0 * standard_error(0.5, n), "{p}");
        let (p, _) = estimate_coverage(&[left, right], &w, n, &mut rng);
        assert!(p >= 1.0 - 3.0 * standard_error(0.999, n), "{p}");
    }

    #[test]
    fn uncovered_sampling() {
        let w = WorldParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = sample_uncovered(&[], &w, &mut rng).unwrap();
        assert!(w.workspace.contains(&q));
        let (lo, hi) = (w.workspace.lo(), w.workspace.hi());
        let left = box_set(&w, 0, lo, [hi[0], 0.0, hi[2]]);
        for _ in 0..200 {
            let q = sample_uncovered(std::slice::from_ref(&left), &w, &mut rng).unwrap();
            assert!(q.y > 0.0);
        }
        let whole = box_set(&w, 0, lo, hi);
        assert_eq!(sample_uncovered(&[whole], &w, &mut rng), Err(CoverError::SamplingExhausted(MAX_UNCOVERED_ATTEMPTS)));
    }

    #[test]
    fn params_validation() {
        assert!(CoverParams::default().validate().is_ok());
        for p in [
            CoverParams { alpha: 1.0, ..Default::default() },
            CoverParams { mc_samples: 999, ..Default::default() },
            CoverParams { max_sets: 0, ..Default::default() },
            CoverParams { grasp_angles: vec![], ..Default::default() },
        ] {
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn zero_alpha_stops_at_guard() {
        let w = WorldParams::default();
        let c = build_cover(&w, &CoverParams { alpha: 0.0, ..Default::default() }, &TransferParams::default());
        assert!(c.sets.len() <= 1);
        assert_eq!(c.sets.len(), c.coverage_history.len());
    }

    fn check_cover_contract(c: &Cover) {
        assert_eq!(c.sets.len(), c.coverage_history.len());
        assert!(c.coverage_history.windows(2).all(|h| h[0] <= h[1]), "{:?}", c.coverage_history);
        for (k, m) in c.sets.iter().enumerate() {
            assert_eq!(m.id, k);
            assert!(!covered(&c.sets[..k], &m.seed.qo), "seed of set {k} was already covered");
        }
    }

    #[test]
    fn small_cover_contract() {
        let w = WorldParams::default();
        let params = CoverParams { alpha: 0.6, max_sets: 6, rng_seed: 9, ..Default::default() };
        let c = build_cover(&w, &params, &TransferParams::default());
        check_cover_contract(&c);
        assert!(!c.sets.is_empty());
    }

    #[test]
    fn obstacle_free_cover_terminates() {
        let w = WorldParams { obstacles: vec![], ..Default::default() };
        let params = CoverParams { max_sets: usize::MAX, ..Default::default() };
        let t = std::time::Instant::now();
        let c = build_cover(&w, &params, &TransferParams::default());
        assert!(t.elapsed().as_secs() < 300);
        check_cover_contract(&c);
        assert!(c.coverage() >= params.alpha);
    }
}
