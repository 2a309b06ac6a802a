//! Exact shortest paths in a graph of convex sets at small scale: for a fixed
//! vertex sequence the problem is a convex QP over the junction points, and a
//! best-first search over sequences (prefix cost is a lower bound, all costs
//! being nonnegative) finds the global optimum over simple paths.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{intersect_sets, stack, QueryGraph};
use crate::qp::{KktResiduals, QpProblem};

/// Costs closer than this are ties, broken by lexicographic vertex order.
pub const TIE_TOL: f64 = 1e-9;

pub const KKT_STATIONARITY: f64 = 1e-6;
pub const KKT_PRIMAL: f64 = 1e-8;
pub const KKT_COMPLEMENTARITY: f64 = 1e-6;

/// Tolerance of the solution checks (membership, continuity, cost).
pub const SOLUTION_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcsError {
    #[error("vertex sequence is infeasible")]
    Infeasible,
    #[error("vertex sequence is not a valid start-to-goal path: {0}")]
    BadSequence(String),
    #[error("restriction solve not certified: {0:?}")]
    NotCertified(KktResiduals),
    #[error("no path from start to goal")]
    NoPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSolution {
    pub vertex_sequence: Vec<usize>,
    /// `(x_in, x_out)` per vertex, in that vertex's chart.
    pub points: Vec<[[f64; 3]; 2]>,
    pub cost: f64,
}

impl PathSolution {
    /// Membership, continuity and cost checks against the query graph.
    pub fn check(&self, qg: &QueryGraph) -> Result<(), String> {
        let g = qg.base;
        let seq = &self.vertex_sequence;
        if seq.is_empty() || seq.len() != self.points.len() {
            return Err("empty sequence or point count mismatch".into());
        }
        if seq.iter().collect::<HashSet<_>>().len() != seq.len() {
            return Err("repeated vertex".into());
        }
        let pt = |p: &[f64; 3]| Vector3::new(p[0], p[1], p[2]);
        for (v, p) in seq.iter().zip(&self.points) {
            for x in p {
                let viol = g.sets[*v].polytope.max_violation(&pt(x));
                if viol > SOLUTION_TOL {
                    return Err(format!("point {x:?} outside set {v} by {viol:e}"));
                }
            }
        }
        let s = qg.start_point(seq[0]).ok_or("first vertex does not contain the start")?;
        let e = qg.goal_point(*seq.last().unwrap()).ok_or("last vertex does not contain the goal")?;
        if (pt(&self.points[0][0]) - s).amax() > SOLUTION_TOL || (pt(&self.points[seq.len() - 1][1]) - e).amax() > SOLUTION_TOL {
            return Err("endpoints do not match the query".into());
        }
        let mut cost = 0.0;
        for k in 0..seq.len() {
            let [a, b] = self.points[k];
            cost += g.vertex_costs[seq[k]].eval(&stack(&pt(&a), &pt(&b)));
            if k + 1 < seq.len() {
                let edge = g.edge(seq[k], seq[k + 1]).ok_or_else(|| format!("missing edge {}->{}", seq[k], seq[k + 1]))?;
                cost += edge.cost.k;
                let jump = pt(&self.points[k + 1][0]) - pt(&b) - Vector3::new(0.0, 0.0, edge.shift);
                if jump.amax() > SOLUTION_TOL {
                    return Err(format!("discontinuity {:e} between vertices {k} and {}", jump.amax(), k + 1));
                }
            }
        }
        if (cost - self.cost).abs() > SOLUTION_TOL * cost.abs().max(1.0) {
            return Err(format!("cost {} does not match recomputed {cost}", self.cost));
        }
        Ok(())
    }
}

/// Sequence end: pinned to the goal, or left free (prefix bound).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum End {
    Goal,
    Free,
}

fn shift_between(qg: &QueryGraph, a: usize, b: usize) -> Result<f64, GcsError> {
    let g = qg.base;
    if let Some(e) = g.edge(a, b) {
        return Ok(e.shift);
    }
    match intersect_sets(&g.sets[a].polytope, &g.sets[b].polytope) {
        Ok(Some(x)) => Ok(x.shift),
        _ => Err(GcsError::Infeasible),
    }
}

fn edge_constant(qg: &QueryGraph, a: usize, b: usize) -> f64 {
    qg.base.edge(a, b).map_or(0.0, |e| e.cost.k)
}

/// Junction-variable QP. Variables are the junctions `z_1 .. z_{n-1}` (each
/// in the chart of the vertex it leaves) plus, for a free end, `x_out` of the
/// last vertex.
fn solve_sequence(qg: &QueryGraph, seq: &[usize], end: End) -> Result<PathSolution, GcsError> {
    let g = qg.base;
    let n = seq.len();
    if n == 0 {
        return Err(GcsError::BadSequence("empty".into()));
    }
    if seq.iter().collect::<HashSet<_>>().len() != n {
        return Err(GcsError::BadSequence("repeated vertex".into()));
    }
    let start = qg.start_point(seq[0]).ok_or_else(|| GcsError::BadSequence("first vertex misses the start".into()))?;
    let goal = match end {
        End::Goal => Some(qg.goal_point(seq[n - 1]).ok_or_else(|| GcsError::BadSequence("last vertex misses the goal".into()))?),
        End::Free => None,
    };
    let shifts: Vec<f64> = (0..n - 1).map(|k| shift_between(qg, seq[k], seq[k + 1])).collect::<Result<_, _>>()?;
    let m = n - 1 + usize::from(goal.is_none());
    let dim = 3 * m;

    // Affine maps: x_in(k) and x_out(k) as (variable index or none, constant).
    let e3 = Vector3::new(0.0, 0.0, 1.0);
    let x_in = |k: usize| -> (Option<usize>, Vector3<f64>) {
        if k == 0 {
            (None, start)
        } else {
            (Some(k - 1), e3 * shifts[k - 1])
        }
    };
    let x_out = |k: usize| -> (Option<usize>, Vector3<f64>) {
        if k + 1 < n {
            (Some(k), Vector3::zeros())
        } else {
            match goal {
                Some(p) => (None, p),
                None => (Some(k), Vector3::zeros()),
            }
        }
    };

    // With x = S y + d per vertex, the cost is y'S'ASy + (2 A d + b)'S y plus
    // a constant; the constant is recovered when the solution is evaluated.
    let mut h = DMatrix::zeros(dim, dim);
    let mut lin = DVector::zeros(dim);
    for k in 0..n {
        let model = &g.vertex_costs[seq[k]];
        let parts = [x_in(k), x_out(k)];
        let mut d = [0.0; 6];
        for (p, (_, c)) in parts.iter().enumerate() {
            for r in 0..3 {
                d[3 * p + r] = c[r];
            }
        }
        let col = |i: usize| parts[i / 3].0.map(|v| 3 * v + i % 3);
        for i in 0..6 {
            let Some(ci) = col(i) else { continue };
            lin[ci] += model.b[i];
            for j in 0..6 {
                lin[ci] += 2.0 * model.a[i][j] * d[j];
                if let Some(cj) = col(j) {
                    h[(ci, cj)] += 2.0 * model.a[i][j];
                }
            }
        }
    }

    // Membership rows: each variable in the set it leaves and, shifted, in
    // the set it enters.
    let mut rows: Vec<(usize, [f64; 3], f64)> = Vec::new();
    for v in 0..m {
        let owner = &g.sets[seq[v]].polytope;
        for (nrm, off) in owner.normals.iter().zip(&owner.offsets) {
            rows.push((v, *nrm, *off));
        }
        if v + 1 < n {
            let next = &g.sets[seq[v + 1]].polytope;
            for (nrm, off) in next.normals.iter().zip(&next.offsets) {
                rows.push((v, *nrm, off - nrm[2] * shifts[v]));
            }
        }
    }

    let y = if dim == 0 {
        DVector::zeros(0)
    } else {
        let mut a = DMatrix::zeros(rows.len(), dim);
        let mut b = DVector::zeros(rows.len());
        for (r, (v, nrm, off)) in rows.iter().enumerate() {
            for c in 0..3 {
                a[(r, 3 * v + c)] = nrm[c];
            }
            b[r] = *off;
        }
        let h = (&h + h.transpose()) * 0.5;
        let qp = QpProblem::new(h, lin, a, b).map_err(|e| GcsError::BadSequence(e.to_string()))?;
        let sol = qp.solve().map_err(|_| GcsError::Infeasible)?;
        let kkt = sol.kkt;
        if kkt.stationarity > KKT_STATIONARITY || kkt.primal_infeasibility > KKT_PRIMAL || kkt.complementarity > KKT_COMPLEMENTARITY {
            return Err(GcsError::NotCertified(kkt));
        }
        sol.x
    };

    let value = |(var, c): (Option<usize>, Vector3<f64>)| -> Vector3<f64> {
        match var {
            Some(v) => Vector3::new(y[3 * v], y[3 * v + 1], y[3 * v + 2]) + c,
            None => c,
        }
    };
    let mut points = Vec::with_capacity(n);
    let mut cost = 0.0;
    for k in 0..n {
        let (a, b) = (value(x_in(k)), value(x_out(k)));
        cost += g.vertex_costs[seq[k]].eval(&stack(&a, &b));
        if k + 1 < n {
            cost += edge_constant(qg, seq[k], seq[k + 1]);
        }
        points.push([[a[0], a[1], a[2]], [b[0], b[1], b[2]]]);
    }
    Ok(PathSolution { vertex_sequence: seq.to_vec(), points, cost })
}

/// Optimal junction points for a fixed start-to-goal vertex sequence.
pub fn solve_restriction(qg: &QueryGraph, seq: &[usize]) -> Result<PathSolution, GcsError> {
    solve_sequence(qg, seq, End::Goal)
}

/// Lower bound on every completion of `seq`: the restriction with the last
/// exit point left free.
pub fn prefix_cost(qg: &QueryGraph, seq: &[usize]) -> Result<f64, GcsError> {
    solve_sequence(qg, seq, End::Free).map(|s| s.cost)
}

/// `(cost, sequence)` order with tolerant cost ties.
fn better(a: &PathSolution, b: &PathSolution) -> bool {
    if (a.cost - b.cost).abs() <= TIE_TOL {
        a.vertex_sequence < b.vertex_sequence
    } else {
        a.cost < b.cost
    }
}

struct Node {
    cost: f64,
    seq: Vec<usize>,
    complete: Option<PathSolution>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Reversed for a min-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.seq.cmp(&self.seq))
            .then_with(|| self.complete.is_some().cmp(&other.complete.is_some()))
    }
}

/// Next step after a prefix: another vertex, or ending at the goal.
pub type Step = Option<usize>;

/// Solved sequences, shared by the searches of one query. `None` marks an
/// infeasible sequence.
#[derive(Default)]
struct Memo {
    prefix: RefCell<HashMap<Vec<usize>, Option<f64>>>,
    full: RefCell<HashMap<Vec<usize>, Option<PathSolution>>>,
}

impl Memo {
    fn prefix(&self, qg: &QueryGraph, seq: &[usize]) -> Result<Option<f64>, GcsError> {
        if let Some(c) = self.prefix.borrow().get(seq) {
            return Ok(*c);
        }
        let c = match prefix_cost(qg, seq) {
            Ok(c) => Some(c),
            Err(GcsError::Infeasible) => None,
            Err(e) => return Err(e),
        };
        self.prefix.borrow_mut().insert(seq.to_vec(), c);
        Ok(c)
    }

    fn full(&self, qg: &QueryGraph, seq: &[usize]) -> Result<Option<PathSolution>, GcsError> {
        if let Some(s) = self.full.borrow().get(seq) {
            return Ok(s.clone());
        }
        let s = match solve_restriction(qg, seq) {
            Ok(s) => Some(s),
            Err(GcsError::Infeasible) => None,
            Err(e) => return Err(e),
        };
        self.full.borrow_mut().insert(seq.to_vec(), s.clone());
        Ok(s)
    }
}

/// Whether some simple continuation of `seq` reaches a goal vertex.
fn can_finish(qg: &QueryGraph, seq: &[usize]) -> bool {
    let g = qg.base;
    let mut seen = vec![false; g.num_vertices()];
    for &v in seq {
        seen[v] = true;
    }
    let mut stack = vec![*seq.last().unwrap()];
    while let Some(v) = stack.pop() {
        if qg.goal_point(v).is_some() {
            return true;
        }
        for &k in &g.adjacency[v] {
            let w = g.edges[k].to;
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    false
}

/// Best-first search over simple paths that extend `root`, never taking a
/// step in `banned` directly after `root`.
fn search(qg: &QueryGraph, memo: &Memo, root: &[usize], banned: &HashSet<Step>) -> Result<Option<PathSolution>, GcsError> {
    let g = qg.base;
    let mut heap = BinaryHeap::new();
    let push_prefix = |heap: &mut BinaryHeap<Node>, seq: Vec<usize>| -> Result<(), GcsError> {
        if !can_finish(qg, &seq) {
            return Ok(());
        }
        if let Some(cost) = memo.prefix(qg, &seq)? {
            heap.push(Node { cost, seq, complete: None });
        }
        Ok(())
    };
    if root.is_empty() {
        for (v, _) in &qg.start_links {
            if !banned.contains(&Some(*v)) {
                push_prefix(&mut heap, vec![*v])?;
            }
        }
    } else {
        if qg.start_point(root[0]).is_none() {
            return Err(GcsError::BadSequence("root does not begin at the start".into()));
        }
        push_prefix(&mut heap, root.to_vec())?;
    }
    let mut best: Option<PathSolution> = None;
    while let Some(node) = heap.pop() {
        if let Some(b) = &best {
            if node.cost > b.cost + TIE_TOL {
                break;
            }
        }
        if let Some(sol) = node.complete {
            if best.as_ref().map_or(true, |b| better(&sol, b)) {
                best = Some(sol);
            }
            continue;
        }
        let at_root = node.seq.as_slice() == root;
        let last = *node.seq.last().unwrap();
        if qg.goal_point(last).is_some() && !(at_root && banned.contains(&None)) {
            if let Some(sol) = memo.full(qg, &node.seq)? {
                heap.push(Node { cost: sol.cost, seq: node.seq.clone(), complete: Some(sol) });
            }
        }
        for &k in &g.adjacency[last] {
            let next = g.edges[k].to;
            if node.seq.contains(&next) || (at_root && banned.contains(&Some(next))) {
                continue;
            }
            let mut seq = node.seq.clone();
            seq.push(next);
            push_prefix(&mut heap, seq)?;
        }
    }
    Ok(best)
}

pub fn shortest_path(qg: &QueryGraph) -> Result<PathSolution, GcsError> {
    search(qg, &Memo::default(), &[], &HashSet::new())?.ok_or(GcsError::NoPath)
}

/// Minimum over every simple start-to-goal sequence of at most `max_len`
/// vertices.
pub fn enumerate_oracle(qg: &QueryGraph, max_len: usize) -> Result<PathSolution, GcsError> {
    fn dfs(qg: &QueryGraph, seq: &mut Vec<usize>, max_len: usize, best: &mut Option<PathSolution>) -> Result<(), GcsError> {
        let last = *seq.last().unwrap();
        if qg.goal_point(last).is_some() {
            match solve_restriction(qg, seq) {
                Ok(sol) => {
                    if best.as_ref().map_or(true, |b| better(&sol, b)) {
                        *best = Some(sol);
                    }
                }
                Err(GcsError::Infeasible) => {}
                Err(e) => return Err(e),
            }
        }
        if seq.len() >= max_len {
            return Ok(());
        }
        for &k in &qg.base.adjacency[last] {
            let next = qg.base.edges[k].to;
            if !seq.contains(&next) {
                seq.push(next);
                dfs(qg, seq, max_len, best)?;
                seq.pop();
            }
        }
        Ok(())
    }
    let mut best = None;
    for (v, _) in &qg.start_links {
        if max_len >= 1 {
            dfs(qg, &mut vec![*v], max_len, &mut best)?;
        }
    }
    best.ok_or(GcsError::NoPath)
}

/// The `k` cheapest distinct simple paths in nondecreasing cost order
/// (deviation search over prefixes). `temperature` is accepted for
/// interface compatibility; ordering is always by exact cost.
pub fn sample_paths(qg: &QueryGraph, k: usize, _temperature: f64) -> Result<Vec<PathSolution>, GcsError> {
    let mut accepted: Vec<PathSolution> = Vec::new();
    if k == 0 {
        return Ok(accepted);
    }
    let memo = Memo::default();
    let Some(first) = search(qg, &memo, &[], &HashSet::new())? else { return Ok(accepted) };
    accepted.push(first);
    let mut candidates: Vec<PathSolution> = Vec::new();
    while accepted.len() < k {
        let last = accepted.last().unwrap().vertex_sequence.clone();
        for i in 0..=last.len() {
            let root = &last[..i];
            let banned: HashSet<Step> = accepted
                .iter()
                .map(|p| &p.vertex_sequence)
                .filter(|s| s.len() >= i && &s[..i] == root)
                .map(|s| s.get(i).copied())
                .collect();
            if let Some(p) = search(qg, &memo, root, &banned)? {
                let seen = accepted.iter().chain(&candidates).any(|q| q.vertex_sequence == p.vertex_sequence);
                if !seen {
                    candidates.push(p);
                }
            }
        }
        let Some(best) = (0..candidates.len()).reduce(|a, b| if better(&candidates[b], &candidates[a]) { b } else { a }) else { break };
        accepted.push(candidates.swap_remove(best));
    }
    Ok(accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{augment_query, EdgeCostModel, MrsGraph, VertexCostModel};
    use crate::reach::ConvexMRS;
    use crate::se2::{HPolytope, Pose2};

    fn boxes(b: &[([f64; 3], [f64; 3])]) -> Vec<ConvexMRS> {
        b.iter().enumerate().map(|(i, (lo, hi))| ConvexMRS::from_polytope(i, HPolytope::from_box(*lo, *hi))).collect()
    }

    fn heuristic_graph(sets: Vec<ConvexMRS>, edges: &[(usize, usize, f64)]) -> MrsGraph {
        let n = sets.len();
        let e: Vec<_> = edges.iter().map(|&(a, b, k)| (a, b, EdgeCostModel { k })).collect();
        MrsGraph::from_parts(sets, vec![VertexCostModel::heuristic(); n], &e).unwrap()
    }

    #[test]
    fn single_vertex_stationary() {
        let g = heuristic_graph(boxes(&[([0.0; 3], [1.0; 3])]), &[]);
        let p = Pose2::new(0.3, 0.4, 0.5);
        let qg = augment_query(&g, &p, &p).unwrap();
        let s = solve_restriction(&qg, &[0]).unwrap();
        assert_eq!(s.cost, 0.0);
        assert_eq!(s.points[0][0], s.points[0][1]);
        s.check(&qg).unwrap();
        assert_eq!(shortest_path(&qg).unwrap().vertex_sequence, vec![0]);
    }

    #[test]
    fn shared_face_junction_matches_grid_search() {
        let g = heuristic_graph(boxes(&[([-1.0; 3], [1.0; 3]), ([1.0, -1.0, -1.0], [3.0, 1.0, 1.0])]), &[(0, 1, 10.0), (1, 0, 10.0)]);
        let (s, e) = (Pose2::new(-0.5, 0.7, -0.3), Pose2::new(2.5, -0.2, 0.9));
        let qg = augment_query(&g, &s, &e).unwrap();
        let sol = solve_restriction(&qg, &[0, 1]).unwrap();
        sol.check(&qg).unwrap();
        // Junction z on the face x = 1: cost |z - s|^2 + |e - z|^2 + 10.
        let f = |y: f64, t: f64| {
            let a = (1.0 - s.x).powi(2) + (y - s.y).powi(2) + (t - s.theta).powi(2);
            let b = (e.x - 1.0).powi(2) + (e.y - y).powi(2) + (e.theta - t).powi(2);
            a + b + 10.0
        };
        let mut best = f64::INFINITY;
        for i in 0..=2000 {
            for j in 0..=2000 {
                best = best.min(f(-1.0 + i as f64 * 1e-3, -1.0 + j as f64 * 1e-3));
            }
        }
        assert!((sol.cost - best).abs() <= 2e-3, "{} vs {best}", sol.cost);
        assert!((sol.points[0][1][0] - 1.0).abs() < 1e-6);
    }

    fn random_instance(seed: u64, n: usize, k_edge: Option<f64>) -> (MrsGraph, Pose2, Pose2) {
        use crate::graph::intersecting_pairs;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<([f64; 3], [f64; 3])> = (0..n)
            .map(|_| {
                let lo = [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0), rng.gen_range(-1.2..0.4)];
                let hi = [lo[0] + rng.gen_range(0.5..2.0), lo[1] + rng.gen_range(0.5..2.0), lo[2] + rng.gen_range(0.3..1.2)];
                (lo, hi)
            })
            .collect();
        let sets = boxes(&b);
        let mut edges = Vec::new();
        for (i, j, _) in intersecting_pairs(&sets).unwrap() {
            edges.push((i, j, k_edge.unwrap_or_else(|| rng.gen_range(0.0..3.0))));
            edges.push((j, i, k_edge.unwrap_or_else(|| rng.gen_range(0.0..3.0))));
        }
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
            let (lo, hi) = b[rng.gen_range(0..n)];
            Pose2::new(rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1]), rng.gen_range(lo[2]..hi[2]))
        };
        let (s, e) = (pick(&mut rng), pick(&mut rng));
        (heuristic_graph(sets, &edges), s, e)
    }

    #[test]
    fn best_first_matches_enumeration() {
        for seed in 0..25 {
            let (g, s, e) = random_instance(seed, 2 + (seed as usize % 7), None);
            let qg = augment_query(&g, &s, &e).unwrap();
            match (shortest_path(&qg), enumerate_oracle(&qg, g.num_vertices())) {
                (Ok(a), Ok(b)) => {
                    assert!((a.cost - b.cost).abs() <= 1e-6, "seed {seed}: {} vs {}", a.cost, b.cost);
                    assert_eq!(a.vertex_sequence, b.vertex_sequence, "seed {seed}");
                    a.check(&qg).unwrap();
                }
                (Err(GcsError::NoPath), Err(GcsError::NoPath)) => {}
                other => panic!("seed {seed}: {other:?}"),
            }
        }
    }

    #[test]
    fn prefix_bound_is_admissible() {
        let (g, s, e) = random_instance(3, 6, None);
        let qg = augment_query(&g, &s, &e).unwrap();
        let best = enumerate_oracle(&qg, 6).unwrap();
        let seq = &best.vertex_sequence;
        for k in 1..=seq.len() {
            assert!(prefix_cost(&qg, &seq[..k]).unwrap() <= best.cost + 1e-9);
        }
    }

    #[test]
    fn infeasible_sequence() {
        let g = heuristic_graph(boxes(&[([0.0; 3], [1.0; 3]), ([2.0, 0.0, 0.0], [3.0, 1.0, 1.0])]), &[]);
        let qg = augment_query(&g, &Pose2::new(0.5, 0.5, 0.5), &Pose2::new(2.5, 0.5, 0.5)).unwrap();
        assert_eq!(solve_restriction(&qg, &[0, 1]), Err(GcsError::Infeasible));
        assert_eq!(shortest_path(&qg), Err(GcsError::NoPath));
    }

    #[test]
    fn theta_wraparound_junction() {
        // Second set lives across the +-pi seam in a shifted chart.
        let g0 = boxes(&[([0.0, 0.0, 2.0], [1.0, 1.0, 3.1]), ([0.0, 0.0, -3.3], [1.0, 1.0, -2.5])]);
        let g = heuristic_graph(g0, &[(0, 1, 1.0), (1, 0, 1.0)]);
        let qg = augment_query(&g, &Pose2::new(0.5, 0.5, 2.2), &Pose2::new(0.5, 0.5, -2.6)).unwrap();
        let sol = shortest_path(&qg).unwrap();
        assert_eq!(sol.vertex_sequence, vec![0, 1]);
        sol.check(&qg).unwrap();
        // Through the seam; the junction sits on set 1's lower angle face.
        let tau = 2.0 * std::f64::consts::PI;
        let z = -3.3 + tau;
        let want = 1.0 + (z - 2.2).powi(2) + (-2.6 + tau - z).powi(2);
        assert!((sol.cost - want).abs() < 1e-6, "{} vs {want}", sol.cost);
    }

    #[test]
    fn parallel_routes_and_ties() {
        // 0 -> {1, 2} -> 3, with the start in 0 and the goal in 3.
        let b = [
            ([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
            ([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]),
            ([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]),
            ([1.2, 0.0, 0.0], [2.0, 1.0, 1.0]),
        ];
        let path = |k1: f64, k2: f64| {
            let g = heuristic_graph(boxes(&b), &[(0, 1, k1), (0, 2, k2), (1, 3, 0.0), (2, 3, 0.0)]);
            let qg = augment_query(&g, &Pose2::new(0.2, 0.5, 0.5), &Pose2::new(1.9, 0.5, 0.5)).unwrap();
            let a = shortest_path(&qg).unwrap();
            let o = enumerate_oracle(&qg, 4).unwrap();
            assert_eq!(a.vertex_sequence, o.vertex_sequence);
            a.vertex_sequence
        };
        assert_eq!(path(1.0, 2.0), vec![0, 1, 3]);
        assert_eq!(path(2.0, 1.0), vec![0, 2, 3]);
        assert_eq!(path(1.0, 1.0), vec![0, 1, 3]);
    }

    #[test]
    fn oracle_length_cap() {
        let g = heuristic_graph(boxes(&[([0.0; 3], [1.0; 3]), ([0.9, 0.0, 0.0], [2.0, 1.0, 1.0])]), &[(0, 1, 1.0), (1, 0, 1.0)]);
        let qg = augment_query(&g, &Pose2::new(0.1, 0.5, 0.5), &Pose2::new(1.9, 0.5, 0.5)).unwrap();
        assert_eq!(enumerate_oracle(&qg, 1), Err(GcsError::NoPath));
        assert_eq!(enumerate_oracle(&qg, 2).unwrap().vertex_sequence, vec![0, 1]);
    }

    #[test]
    fn k_paths() {
        for seed in 0..20 {
            let (g, s, e) = random_instance(100 + seed, 6, None);
            let qg = augment_query(&g, &s, &e).unwrap();
            let paths = sample_paths(&qg, 6, 1.0).unwrap();
            if let Ok(best) = shortest_path(&qg) {
                assert_eq!(paths[0], best);
                assert_eq!(sample_paths(&qg, 1, 1.0).unwrap(), vec![best]);
            } else {
                assert!(paths.is_empty());
            }
            assert!(paths.windows(2).all(|w| w[0].cost <= w[1].cost + TIE_TOL));
            let distinct: HashSet<_> = paths.iter().map(|p| p.vertex_sequence.clone()).collect();
            assert_eq!(distinct.len(), paths.len());
            for p in &paths {
                p.check(&qg).unwrap();
            }
        }
    }

    #[test]
    fn k_paths_exhaust_small_graph() {
        // Two sets overlapping: simple start-to-goal paths are [0], [0, 1],
        // [1], [1, 0] when both sets contain both endpoints.
        let g = heuristic_graph(boxes(&[([0.0; 3], [1.0; 3]), ([0.0; 3], [1.0; 3])]), &[(0, 1, 1.0), (1, 0, 1.0)]);
        let qg = augment_query(&g, &Pose2::new(0.1, 0.5, 0.5), &Pose2::new(0.9, 0.5, 0.5)).unwrap();
        let paths = sample_paths(&qg, 10, 1.0).unwrap();
        let seqs: Vec<_> = paths.iter().map(|p| p.vertex_sequence.clone()).collect();
        assert_eq!(seqs, vec![vec![0], vec![1], vec![0, 1], vec![1, 0]]);
    }
}
