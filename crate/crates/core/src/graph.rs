//! The planning graph over mutual reachable sets: one transfer vertex per set,
//! a directed edge pair per intersecting pair of sets, and surrogate costs
//! fitted from planner rollouts (or simple heuristics).

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planners::{regrasp_needed, transfer_geodesic, transit_plan, TransferParams, TransitParams};
use crate::reach::{grasp_in_set, inverse_project, ConvexMRS};
use crate::se2::{theta_alignment, ChartBox, GeometryError, HPolytope, Pose2};
use crate::system::{task_cost, WorldParams};

/// Inscribed-ball radius below which an intersection counts as empty. Slightly
/// negative so that sets sharing only a face still intersect.
pub const MIN_INTERSECTION_RADIUS: f64 = -1e-9;

/// Edge constant of the heuristic cost mode.
pub const HEURISTIC_EDGE_COST: f64 = 10.0;

/// Penalty used for failed samples when no sample of the batch succeeded.
pub const NO_SUCCESS_PENALTY: f64 = 10.0;

const RIDGE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("start pose is not inside any set")]
    StartUncovered,
    #[error("goal pose is not inside any set")]
    GoalUncovered,
    #[error("graph needs at least one set")]
    EmptyCover,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    Fitted,
    Heuristic,
}

impl std::str::FromStr for CostMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fitted" => Ok(CostMode::Fitted),
            "heuristic" => Ok(CostMode::Heuristic),
            _ => Err(format!("unknown cost mode {s:?} (expected fitted or heuristic)")),
        }
    }
}

/// `x' A x + b' x + c` over `x = (x_in, x_out)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexCostModel {
    #[serde(rename = "A")]
    pub a: [[f64; 6]; 6],
    pub b: [f64; 6],
    pub c: f64,
}

pub fn stack(x_in: &Vector3<f64>, x_out: &Vector3<f64>) -> [f64; 6] {
    [x_in[0], x_in[1], x_in[2], x_out[0], x_out[1], x_out[2]]
}

impl VertexCostModel {
    pub fn zero() -> Self {
        VertexCostModel { a: [[0.0; 6]; 6], b: [0.0; 6], c: 0.0 }
    }

    /// `|x_out - x_in|^2`.
    pub fn heuristic() -> Self {
        let mut a = [[0.0; 6]; 6];
        for k in 0..3 {
            a[k][k] = 1.0;
            a[k + 3][k + 3] = 1.0;
            a[k][k + 3] = -1.0;
            a[k + 3][k] = -1.0;
        }
        VertexCostModel { a, b: [0.0; 6], c: 0.0 }
    }

    pub fn eval(&self, x: &[f64; 6]) -> f64 {
        let mut v = self.c;
        for i in 0..6 {
            v += self.b[i] * x[i];
            for j in 0..6 {
                v += x[i] * self.a[i][j] * x[j];
            }
        }
        v
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(6, 6, |i, j| self.a[i][j])
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix()).eigenvalues.min()
    }

    /// Smallest eigenvalue of `[[A, b/2], [b'/2, c]]`; nonnegative means the
    /// quadratic is nonnegative everywhere.
    pub fn block_min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_fn(7, 7, |i, j| match (i, j) {
            (6, 6) => self.c,
            (6, k) | (k, 6) => self.b[k] / 2.0,
            _ => self.a[i][j],
        });
        SymmetricEigen::new(m).eigenvalues.min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCostModel {
    pub k: f64,
}

/// One vertex-cost sample: stacked chart endpoints and realised cost.
pub type VertexSample = ([f64; 6], f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexFit {
    pub model: VertexCostModel,
    /// Root-mean-square residual of the final (projected) model.
    pub rms_residual: f64,
}

fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let n = x.ncols();
    let mut xtx = x.transpose() * x;
    for i in 0..n {
        xtx[(i, i)] += RIDGE;
    }
    let xty = x.transpose() * y;
    match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => xtx.lu().solve(&xty).unwrap_or_else(|| DVector::zeros(n)),
    }
}

/// Least-squares quadratic, projected onto nonnegative convex quadratics:
/// negative eigenvalues of A are clipped, the linear term is refitted inside
/// the range of A together with the constant, and the constant is then
/// raised just enough for the minimum to be nonnegative.
pub fn fit_vertex_cost(samples: &[VertexSample]) -> VertexFit {
    let n = samples.len();
    let pairs: Vec<(usize, usize)> = (0..6).flat_map(|i| (i..6).map(move |j| (i, j))).collect();
    let cols = pairs.len() + 7;
    let x = DMatrix::from_fn(n, cols, |r, k| {
        let s = &samples[r].0;
        if k < pairs.len() {
            s[pairs[k].0] * s[pairs[k].1]
        } else if k < pairs.len() + 6 {
            s[k - pairs.len()]
        } else {
            1.0
        }
    });
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let theta = ridge_solve(&x, &y);

    let mut a = DMatrix::zeros(6, 6);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            a[(i, i)] = theta[k];
        } else {
            a[(i, j)] = theta[k] / 2.0;
            a[(j, i)] = theta[k] / 2.0;
        }
    }
    let eig = SymmetricEigen::new(a);
    let scale = eig.eigenvalues.amax().max(1.0);
    let keep: Vec<usize> = (0..6).filter(|&k| eig.eigenvalues[k] > 1e-9 * scale).collect();
    let mut a_psd = DMatrix::zeros(6, 6);
    for &k in &keep {
        let u = eig.eigenvectors.column(k);
        a_psd += eig.eigenvalues[k] * u * u.transpose();
    }
    let a_psd = (&a_psd + a_psd.transpose()) * 0.5;

    // Refit b = U beta (U spans the kept eigenvectors) and c with A fixed.
    let quad = |s: &[f64; 6]| {
        let v = DVector::from_column_slice(s);
        v.dot(&(&a_psd * &v))
    };
    let r = keep.len();
    let z = DMatrix::from_fn(n, r + 1, |row, k| {
        if k < r {
            DVector::from_column_slice(&samples[row].0).dot(&eig.eigenvectors.column(keep[k]))
        } else {
            1.0
        }
    });
    let y2 = DVector::from_iterator(n, samples.iter().map(|s| s.1 - quad(&s.0)));
    let fit2 = ridge_solve(&z, &y2);
    let mut b = DVector::zeros(6);
    let mut floor = 0.0;
    for (k, &e) in keep.iter().enumerate() {
        b += fit2[k] * eig.eigenvectors.column(e);
        floor += fit2[k] * fit2[k] / (4.0 * eig.eigenvalues[e]);
    }
    let c = fit2[r].max(floor);

    let mut model = VertexCostModel { a: [[0.0; 6]; 6], b: [0.0; 6], c };
    for i in 0..6 {
        model.b[i] = b[i];
        for j in 0..6 {
            model.a[i][j] = a_psd[(i, j)];
        }
    }
    let sse: f64 = samples.iter().map(|s| (model.eval(&s.0) - s.1).powi(2)).sum();
    VertexFit { model, rms_residual: (sse / n.max(1) as f64).sqrt() }
}

pub fn fit_edge_cost(samples: &[f64]) -> EdgeCostModel {
    EdgeCostModel { k: samples.iter().sum::<f64>() / samples.len().max(1) as f64 }
}

/// Failed samples (`None`) become twice the largest successful cost.
pub fn apply_penalty(costs: &[Option<f64>]) -> Vec<f64> {
    let max = costs.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let penalty = if max.is_finite() { 2.0 * max } else { NO_SUCCESS_PENALTY };
    costs.iter().map(|c| c.unwrap_or(penalty)).collect()
}

/// Intersection of two sets expressed in the first set's chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub polytope: HPolytope,
    /// Angle offset taking a point of the first chart to the second.
    pub shift: f64,
}

pub fn intersect_sets(a: &HPolytope, b: &HPolytope) -> Result<Option<Intersection>, GeometryError> {
    let Some(s) = theta_alignment(a.theta_range()?, b.theta_range()?) else { return Ok(None) };
    let polytope = a.stacked(&b.shifted_theta(s));
    let (_, radius) = polytope.chebyshev_center()?;
    Ok((radius >= MIN_INTERSECTION_RADIUS).then_some(Intersection { polytope, shift: -s }))
}

fn sample_chart(poly: &HPolytope, bbox: &ChartBox, rng: &mut ChaCha8Rng) -> Option<Vector3<f64>> {
    poly.sample_uniform(bbox, rng, 100_000)
}

/// Deterministic child seed.
pub fn sub_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

/// Grid spacing for transfer waypoints: half the set's finest resolution.
pub fn waypoint_spacing(m: &ConvexMRS) -> f64 {
    m.discrete.grid.delta.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0
}

pub fn sample_vertex_cost_data(
    world: &WorldParams,
    pi: &TransferParams,
    m: &ConvexMRS,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<VertexSample>, GeometryError> {
    let bbox = m.polytope.bounding_box()?;
    let spacing = waypoint_spacing(m);
    let mut xs = Vec::with_capacity(k);
    let mut costs = Vec::with_capacity(k);
    for _ in 0..k {
        let (Some(x_in), Some(x_out)) = (sample_chart(&m.polytope, &bbox, rng), sample_chart(&m.polytope, &bbox, rng)) else {
            return Err(GeometryError::Empty);
        };
        let cost = inverse_project(world, pi, &Pose2::from_chart(&x_in), m).ok().and_then(|q| {
            let r = transfer_geodesic(world, pi, &q, &Pose2::from_chart(&x_out), spacing).ok()?;
            r.reached.then(|| task_cost(&r.configs))
        });
        xs.push(stack(&x_in, &x_out));
        costs.push(cost);
    }
    Ok(xs.into_iter().zip(apply_penalty(&costs)).collect())
}

/// Regrasp costs from set `i`'s grasp to set `j`'s at poses in their
/// intersection.
pub fn sample_edge_cost_data(
    world: &WorldParams,
    pi: &TransferParams,
    psi: &TransitParams,
    i: &ConvexMRS,
    j: &ConvexMRS,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, GeometryError> {
    let Some(inter) = intersect_sets(&i.polytope, &j.polytope)? else { return Err(GeometryError::Empty) };
    let bbox = inter.polytope.bounding_box()?;
    let mut costs = Vec::with_capacity(k);
    for n in 0..k {
        let x = sample_chart(&inter.polytope, &bbox, rng).ok_or(GeometryError::Empty)?;
        let q = Pose2::from_chart(&x);
        let cost = (|| {
            let qi = grasp_in_set(world, pi, &q, i).ok()?;
            let qj = grasp_in_set(world, pi, &q, j).ok()?;
            if !regrasp_needed(&qi, &qj) {
                return Some(0.0);
            }
            let params = TransitParams { rng_seed: sub_seed(psi.rng_seed, &[i.id as u64, j.id as u64, n as u64]), ..*psi };
            let t = transit_plan(world, &params, &qi, &qj.qa).ok()?;
            Some(task_cost(&t.configs))
        })();
        costs.push(cost);
    }
    Ok(apply_penalty(&costs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub cost_mode: CostMode,
    pub vertex_samples: usize,
    pub edge_samples: usize,
    pub rng_seed: u64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams { cost_mode: CostMode::Fitted, vertex_samples: 50, edge_samples: 20, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub from: usize,
    pub to: usize,
    pub cost: EdgeCostModel,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrsGraph {
    pub sets: Vec<ConvexMRS>,
    pub vertex_costs: Vec<VertexCostModel>,
    pub edges: Vec<GraphEdge>,
    /// Outgoing edge indices per vertex, in increasing target order.
    pub adjacency: Vec<Vec<usize>>,
}

impl MrsGraph {
    /// Assembles a graph from parts; edge shifts are recomputed from the
    /// polytopes, and edges between non-intersecting sets are rejected.
    pub fn from_parts(sets: Vec<ConvexMRS>, vertex_costs: Vec<VertexCostModel>, edges: &[(usize, usize, EdgeCostModel)]) -> Result<Self, GraphError> {
        let n = sets.len();
        let mut out = Vec::with_capacity(edges.len());
        for &(from, to, cost) in edges {
            if from >= n || to >= n || from == to {
                return Err(GraphError::Geometry(GeometryError::Empty));
            }
            let inter = intersect_sets(&sets[from].polytope, &sets[to].polytope)?.ok_or(GeometryError::Empty)?;
            out.push(GraphEdge { from, to, cost, shift: inter.shift });
        }
        Ok(Self::assemble(sets, vertex_costs, out))
    }

    fn assemble(sets: Vec<ConvexMRS>, vertex_costs: Vec<VertexCostModel>, mut edges: Vec<GraphEdge>) -> Self {
        edges.sort_by_key(|e| (e.from, e.to));
        let mut adjacency = vec![Vec::new(); sets.len()];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.from].push(k);
        }
        MrsGraph { sets, vertex_costs, edges, adjacency }
    }

    pub fn num_vertices(&self) -> usize {
        self.sets.len()
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&GraphEdge> {
        self.adjacency[from].iter().map(|k| &self.edges[*k]).find(|e| e.to == to)
    }
}

/// Ordered pairs `(i, j)`, `i < j`, of intersecting sets.
pub fn intersecting_pairs(sets: &[ConvexMRS]) -> Result<Vec<(usize, usize, f64)>, GeometryError> {
    let pairs: Vec<(usize, usize)> = (0..sets.len()).flat_map(|i| (i + 1..sets.len()).map(move |j| (i, j))).collect();
    let found: Result<Vec<_>, GeometryError> = pairs
        .par_iter()
        .map(|&(i, j)| Ok(intersect_sets(&sets[i].polytope, &sets[j].polytope)?.map(|x| (i, j, x.shift))))
        .collect();
    Ok(found?.into_iter().flatten().collect())
}

pub fn build_graph(
    world: &WorldParams,
    sets: &[ConvexMRS],
    params: &GraphParams,
    pi: &TransferParams,
    psi: &TransitParams,
) -> Result<MrsGraph, GraphError> {
    if sets.is_empty() {
        return Err(GraphError::EmptyCover);
    }
    let pairs = intersecting_pairs(sets)?;
    let directed: Vec<(usize, usize, f64)> = pairs.iter().flat_map(|&(i, j, s)| [(i, j, s), (j, i, -s)]).collect();
    let (vertex_costs, edge_costs) = match params.cost_mode {
        CostMode::Heuristic => (vec![VertexCostModel::heuristic(); sets.len()], vec![HEURISTIC_EDGE_COST; directed.len()]),
        CostMode::Fitted => {
            let vertex_costs: Result<Vec<_>, GeometryError> = sets
                .par_iter()
                .map(|m| {
                    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(params.rng_seed, &[0, m.id as u64]));
                    let data = sample_vertex_cost_data(world, pi, m, params.vertex_samples, &mut rng)?;
                    Ok(fit_vertex_cost(&data).model)
                })
                .collect();
            let edge_costs: Result<Vec<_>, GeometryError> = directed
                .par_iter()
                .map(|&(i, j, _)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(params.rng_seed, &[1, i as u64, j as u64]));
                    let psi = TransitParams { rng_seed: sub_seed(params.rng_seed, &[2, i as u64, j as u64]), ..*psi };
                    let data = sample_edge_cost_data(world, pi, &psi, &sets[i], &sets[j], params.edge_samples, &mut rng)?;
                    Ok(fit_edge_cost(&data).k)
                })
                .collect();
            (vertex_costs?, edge_costs?)
        }
    };
    let edges = directed
        .iter()
        .zip(edge_costs)
        .map(|(&(from, to, shift), k)| GraphEdge { from, to, cost: EdgeCostModel { k }, shift })
        .collect();
    Ok(MrsGraph::assemble(sets.to_vec(), vertex_costs, edges))
}

/// A planning graph with a start and a goal singleton attached. Links carry
/// the pose's chart point in each containing set.
#[derive(Debug, Clone)]
pub struct QueryGraph<'g> {
    pub base: &'g MrsGraph,
    pub start: Pose2,
    pub goal: Pose2,
    pub start_links: Vec<(usize, Vector3<f64>)>,
    pub goal_links: Vec<(usize, Vector3<f64>)>,
}

impl QueryGraph<'_> {
    pub fn start_point(&self, v: usize) -> Option<Vector3<f64>> {
        self.start_links.iter().find(|l| l.0 == v).map(|l| l.1)
    }

    pub fn goal_point(&self, v: usize) -> Option<Vector3<f64>> {
        self.goal_links.iter().find(|l| l.0 == v).map(|l| l.1)
    }
}

pub fn augment_query<'g>(g: &'g MrsGraph, start: &Pose2, goal: &Pose2) -> Result<QueryGraph<'g>, GraphError> {
    let links = |q: &Pose2| -> Vec<(usize, Vector3<f64>)> {
        g.sets.iter().enumerate().filter_map(|(i, m)| m.polytope.chart_point_for(q).map(|p| (i, p))).collect()
    };
    let start_links = links(start);
    if start_links.is_empty() {
        return Err(GraphError::StartUncovered);
    }
    let goal_links = links(goal);
    if goal_links.is_empty() {
        return Err(GraphError::GoalUncovered);
    }
    Ok(QueryGraph { base: g, start: *start, goal: *goal, start_links, goal_links })
}
