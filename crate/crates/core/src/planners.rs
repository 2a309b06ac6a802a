//! Local planners: a contact-preserving transfer tracker that carries the
//! grasped object along reference paths, and a collision-free transit planner
//! (RRT-Connect in joint space plus smoothing) for regrasps.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::QpProblem;
use crate::se2::{distance, lerp_pose, wrap, Pose2};
use crate::system::{
    carried_fingertips, collision_check, first_violation, fingertips, ik_near, is_grasped, qa_within_limits, replay,
    step_dynamics, ControlInput, PairMask, SystemConfig, SystemError, WorldParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("configuration is not grasping the object")]
    NotGrasped,
    #[error("transit endpoint is in collision or outside joint limits")]
    InvalidEndpoint,
    #[error("no collision-free transit path found")]
    NoPathFound,
    #[error("planned inputs failed to replay at step {0}: {1}")]
    Replay(usize, SystemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferParams {
    pub horizon: usize,
    pub eta: f64,
    pub reach_tol: f64,
    pub n_references: usize,
}

impl Default for TransferParams {
    fn default() -> Self {
        TransferParams { horizon: 120, eta: 0.05, reach_tol: 0.05, n_references: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub inputs: Vec<ControlInput>,
    /// Visited configurations, starting with the initial one.
    pub configs: Vec<SystemConfig>,
    pub reached: bool,
    pub final_error: f64,
}

impl TransferResult {
    pub fn last(&self) -> &SystemConfig {
        self.configs.last().expect("transfer result always holds its start")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitParams {
    pub max_rrt_iters: usize,
    /// RRT extension length (max-norm, radians). Output steps are a quarter of it.
    pub step_size: f64,
    pub shortcut_rounds: usize,
    pub eps: f64,
    pub rng_seed: u64,
}

impl Default for TransitParams {
    fn default() -> Self {
        TransitParams { max_rrt_iters: 4000, step_size: 0.4, shortcut_rounds: 60, eps: 0.01, rng_seed: 0 }
    }
}

impl TransitParams {
    fn out_step(&self) -> f64 {
        self.step_size / 4.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitResult {
    pub inputs: Vec<ControlInput>,
    pub configs: Vec<SystemConfig>,
}

/// Lateral offsets for references beyond the plain and via-seed ones.
const LATERAL_STEP: f64 = 0.1;

/// Candidate object paths as chart polylines with a continuous angle.
fn references(start: &Pose2, goal: &Pose2, via: Option<&Pose2>, n: usize) -> Vec<Vec<Vector3<f64>>> {
    let lift = |from: &Vector3<f64>, to: &Pose2| Vector3::new(to.x, to.y, from[2] + wrap(to.theta - from[2]));
    let p0 = start.chart();
    let pg = lift(&p0, goal);
    let mut out = vec![vec![p0, pg]];
    if let Some(v) = via {
        if out.len() < n {
            let pv = lift(&p0, v);
            out.push(vec![p0, pv, lift(&pv, goal)]);
        }
    }
    let d = pg - p0;
    let planar = d[0].hypot(d[1]);
    let perp = if planar > 1e-9 { Vector3::new(-d[1] / planar, d[0] / planar, 0.0) } else { Vector3::new(0.0, 1.0, 0.0) };
    let mid = (p0 + pg) * 0.5;
    let mut k = 1;
    while out.len() < n {
        out.push(vec![p0, mid + perp * (LATERAL_STEP * k as f64), pg]);
        k += 1;
    }
    out.truncate(n.max(1));
    out
}

fn chart_len(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (b - a).norm()
}

struct Polyline<'a> {
    pts: &'a [Vector3<f64>],
    cum: Vec<f64>,
}

impl<'a> Polyline<'a> {
    fn new(pts: &'a [Vector3<f64>]) -> Self {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + chart_len(&w[0], &w[1]));
        }
        Polyline { pts, cum }
    }

    fn len(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn at(&self, s: f64) -> Vector3<f64> {
        if s >= self.len() {
            return *self.pts.last().unwrap();
        }
        let i = self.cum.partition_point(|c| *c <= s).saturating_sub(1).min(self.pts.len() - 2);
        let seg = self.cum[i + 1] - self.cum[i];
        let t = if seg > 0.0 { (s - self.cum[i]) / seg } else { 0.0 };
        self.pts[i] + (self.pts[i + 1] - self.pts[i]) * t
    }
}

fn max_joint_change(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    (0..4).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max)
}

/// Greedy tracking of one reference: each step jumps as far along the path as
/// the joint-rate limit allows.
fn track(world: &WorldParams, params: &TransferParams, q: &SystemConfig, path: &[Vector3<f64>], goal: &Pose2) -> TransferResult {
    let line = Polyline::new(path);
    let total = line.len();
    let mut s = 0.0;
    let mut cur = *q;
    let mut inputs = Vec::new();
    let mut configs = vec![*q];
    let mut adv = total;
    for _ in 0..params.horizon {
        if total - s <= 1e-12 {
            break;
        }
        adv = (2.0 * adv).min(total - s);
        let mut cmd = None;
        while adv > 1e-7 {
            let target = Pose2::from_chart(&line.at(s + adv));
            let tips = carried_fingertips(world, &cur, &target);
            if let Some(qa) = ik_near(world, &tips, &cur.qa) {
                if max_joint_change(&qa, &cur.qa) <= params.eta {
                    cmd = Some(qa);
                    break;
                }
            }
            adv *= 0.5;
        }
        let Some(qa) = cmd else { break };
        let u = ControlInput { u: qa };
        match step_dynamics(world, &cur, &u) {
            Ok(next) => {
                cur = next;
                s += adv;
                inputs.push(u);
                configs.push(next);
            }
            Err(_) => break,
        }
    }
    let final_error = distance(&cur.qo, goal);
    TransferResult { inputs, configs, reached: final_error <= params.reach_tol, final_error }
}

/// Carries the grasped object from `q` toward `goal`. References are tried in
/// order (plain geodesic, via `via` if given, then lateral detours); the
/// first one that ends within `reach_tol` wins, otherwise the closest attempt
/// is returned unreached.
pub fn transfer_plan(
    world: &WorldParams,
    params: &TransferParams,
    q: &SystemConfig,
    goal: &Pose2,
    via: Option<&Pose2>,
) -> Result<TransferResult, PlannerError> {
    if !is_grasped(world, q) {
        return Err(PlannerError::NotGrasped);
    }
    let err0 = distance(&q.qo, goal);
    if err0 <= 1e-12 {
        return Ok(TransferResult { inputs: vec![], configs: vec![*q], reached: true, final_error: err0 });
    }
    let mut best: Option<TransferResult> = None;
    for (i, path) in references(&q.qo, goal, via, params.n_references).iter().enumerate() {
        let r = match via {
            Some(v) if i == 1 => via_legs(world, params, q, goal, v)?,
            _ => track(world, params, q, path, goal),
        };
        if r.reached {
            return Ok(r);
        }
        if best.as_ref().map_or(true, |b| r.final_error < b.final_error) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one reference"))
}

/// The via reference, run as two plain transfers with a fresh horizon each:
/// `q` to `via`, then from wherever the first leg ended to `goal`.
fn via_legs(world: &WorldParams, params: &TransferParams, q: &SystemConfig, goal: &Pose2, via: &Pose2) -> Result<TransferResult, PlannerError> {
    let mut r = transfer_plan(world, params, q, via, None)?;
    let second = transfer_plan(world, params, r.last(), goal, None)?;
    r.inputs.extend(second.inputs);
    r.configs.extend(second.configs.into_iter().skip(1));
    r.final_error = distance(&r.last().qo, goal);
    r.reached = r.final_error <= params.reach_tol;
    Ok(r)
}

/// Transfer along the geodesic to `goal` through waypoints at most `spacing`
/// apart, one plain transfer per waypoint. Stops at the first waypoint that
/// is not reached.
pub fn transfer_geodesic(
    world: &WorldParams,
    params: &TransferParams,
    q: &SystemConfig,
    goal: &Pose2,
    spacing: f64,
) -> Result<TransferResult, PlannerError> {
    let start = q.qo;
    let n = ((distance(&start, goal) / spacing).ceil() as usize).max(1);
    let mut out = TransferResult { inputs: vec![], configs: vec![*q], reached: true, final_error: 0.0 };
    for k in 1..=n {
        let wp = if k == n { *goal } else { lerp_pose(&start, goal, k as f64 / n as f64) };
        let r = transfer_plan(world, params, out.last(), &wp, None)?;
        out.inputs.extend(r.inputs);
        out.configs.extend(r.configs.into_iter().skip(1));
        if !r.reached {
            break;
        }
    }
    out.final_error = distance(&out.last().qo, goal);
    out.reached = out.final_error <= params.reach_tol;
    Ok(out)
}

/// Two configurations at the same object pose whose joints differ by less
/// than this need no regrasp between them.
pub const SAME_GRASP_TOL: f64 = 1e-6;

pub fn regrasp_needed(a: &SystemConfig, b: &SystemConfig) -> bool {
    a.qo != b.qo || max_joint_change(&a.qa, &b.qa) > SAME_GRASP_TOL
}

fn clear(world: &WorldParams, qa: &[f64; 4], qo: &Pose2, eps: f64) -> bool {
    qa_within_limits(world, qa) && first_violation(world, &SystemConfig { qa: *qa, qo: *qo }, PairMask::ALL, eps).is_none()
}

fn lerp4(a: &[f64; 4], b: &[f64; 4], s: f64) -> [f64; 4] {
    std::array::from_fn(|k| a[k] + s * (b[k] - a[k]))
}

/// Number of output steps for a straight joint-space segment.
fn pieces(a: &[f64; 4], b: &[f64; 4], step: f64) -> usize {
    ((max_joint_change(a, b) / step).ceil() as usize).max(1)
}

/// Dense clearance check. Sample points are a superset of the output step
/// points, so every emitted waypoint has been checked.
fn segment_clear(world: &WorldParams, a: &[f64; 4], b: &[f64; 4], qo: &Pose2, eps: f64, step: f64) -> bool {
    let n = 4 * pieces(a, b, step);
    (1..=n).all(|k| clear(world, &lerp4(a, b, k as f64 / n as f64), qo, eps))
}

/// Fingers pulled radially off the object far enough to clear `eps`.
fn retreat(world: &WorldParams, qa: &[f64; 4], qo: &Pose2, eps: f64) -> Option<[f64; 4]> {
    let tips = fingertips(world, qa);
    let gap = 2.0 * eps.max(world.contact_tol);
    let mut target = tips;
    let mut moved = false;
    for (k, p) in tips.iter().enumerate() {
        let d = [p[0] - qo.x, p[1] - qo.y];
        let r = d[0].hypot(d[1]);
        if r - world.object_radius < gap {
            if r < 1e-9 {
                return None;
            }
            let want = world.object_radius + gap;
            target[k] = [qo.x + d[0] / r * want, qo.y + d[1] / r * want];
            moved = true;
        }
    }
    if !moved {
        return Some(*qa);
    }
    ik_near(world, &target, qa)
}

struct Tree {
    nodes: Vec<[f64; 4]>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: [f64; 4]) -> Self {
        Tree { nodes: vec![root], parent: vec![usize::MAX] }
    }

    fn nearest(&self, q: &[f64; 4]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d: f64 = (0..4).map(|k| (n[k] - q[k]).powi(2)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    fn path_to_root(&self, mut i: usize) -> Vec<[f64; 4]> {
        let mut out = Vec::new();
        while i != usize::MAX {
            out.push(self.nodes[i]);
            i = self.parent[i];
        }
        out
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

fn extend(world: &WorldParams, p: &TransitParams, qo: &Pose2, tree: &mut Tree, target: &[f64; 4]) -> Extend {
    let i = tree.nearest(target);
    let from = tree.nodes[i];
    let d = max_joint_change(&from, target);
    let (to, reached) = if d <= p.step_size { (*target, true) } else { (lerp4(&from, target, p.step_size / d), false) };
    if !segment_clear(world, &from, &to, qo, p.eps, p.out_step()) {
        return Extend::Trapped;
    }
    tree.nodes.push(to);
    tree.parent.push(i);
    let j = tree.nodes.len() - 1;
    if reached {
        Extend::Reached(j)
    } else {
        Extend::Advanced(j)
    }
}

fn connect(world: &WorldParams, p: &TransitParams, qo: &Pose2, tree: &mut Tree, target: &[f64; 4]) -> Option<usize> {
    loop {
        match extend(world, p, qo, tree, target) {
            Extend::Reached(j) => return Some(j),
            Extend::Advanced(_) => continue,
            Extend::Trapped => return None,
        }
    }
}

fn rrt_connect(world: &WorldParams, p: &TransitParams, qo: &Pose2, a: [f64; 4], b: [f64; 4], rng: &mut ChaCha8Rng) -> Option<Vec<[f64; 4]>> {
    if segment_clear(world, &a, &b, qo, p.eps, p.out_step()) {
        return Some(vec![a, b]);
    }
    let limits = [world.arms.left.joint_limits, world.arms.right.joint_limits];
    let mut ta = Tree::new(a);
    let mut tb = Tree::new(b);
    let mut a_is_start = true;
    for _ in 0..p.max_rrt_iters {
        let sample: [f64; 4] = std::array::from_fn(|k| {
            let [lo, hi] = limits[k / 2][k % 2];
            rng.gen_range(lo..=hi)
        });
        let new = match extend(world, p, qo, &mut ta, &sample) {
            Extend::Trapped => None,
            Extend::Reached(j) | Extend::Advanced(j) => Some(j),
        };
        if let Some(j) = new {
            let q = ta.nodes[j];
            if let Some(k) = connect(world, p, qo, &mut tb, &q) {
                let mut left = ta.path_to_root(j);
                left.reverse();
                let right = tb.path_to_root(k);
                left.extend_from_slice(&right[1..]);
                if !a_is_start {
                    left.reverse();
                }
                return Some(left);
            }
        }
        std::mem::swap(&mut ta, &mut tb);
        a_is_start = !a_is_start;
    }
    None
}

/// Sum of squared joint-space segment lengths.
pub fn path_cost(path: &[[f64; 4]]) -> f64 {
    path.windows(2).map(|w| (0..4).map(|k| (w[1][k] - w[0][k]).powi(2)).sum::<f64>()).sum()
}

fn path_clear(world: &WorldParams, p: &TransitParams, qo: &Pose2, path: &[[f64; 4]]) -> bool {
    path.windows(2).all(|w| segment_clear(world, &w[0], &w[1], qo, p.eps, p.out_step()))
}

const SQP_ITERS: usize = 10;
const SQP_REG: f64 = 1e-6;
/// Pairs closer than this (beyond eps) enter the linearised constraint set.
const SQP_ACTIVE_MARGIN: f64 = 0.05;

/// Shortcutting followed by a few trust-region SQP rounds with linearised
/// clearance constraints. The endpoints are fixed and the cost
/// `sum |q_{t+1} - q_t|^2` never increases.
pub fn smooth_path(world: &WorldParams, params: &TransitParams, qo: &Pose2, path: &[[f64; 4]], rng: &mut ChaCha8Rng) -> Vec<[f64; 4]> {
    let mut cur = path.to_vec();
    if cur.len() < 3 {
        return cur;
    }
    let mut cost = path_cost(&cur);
    for _ in 0..params.shortcut_rounds {
        let n = cur.len();
        let i = rng.gen_range(0..n - 2);
        let j = rng.gen_range(i + 2..n);
        let (a, b) = (cur[i], cur[j]);
        let mut cand = cur.clone();
        for t in i + 1..j {
            cand[t] = lerp4(&a, &b, (t - i) as f64 / (j - i) as f64);
        }
        let c = path_cost(&cand);
        if c < cost && path_clear(world, params, qo, &cand[i..=j]) {
            cur = cand;
            cost = c;
        }
    }
    let mut radius = 0.2;
    for _ in 0..SQP_ITERS {
        let Some(step) = sqp_step(world, params, qo, &cur, radius) else { break };
        let c = path_cost(&step);
        if c < cost && step.iter().all(|q| clear(world, q, qo, params.eps)) && path_clear(world, params, qo, &step) {
            cur = step;
            cost = c;
        } else {
            radius *= 0.5;
        }
    }
    cur
}

fn pair_distances(world: &WorldParams, qa: &[f64; 4], qo: &Pose2) -> Vec<f64> {
    collision_check(world, &SystemConfig { qa: *qa, qo: *qo }).into_iter().map(|(_, d)| d).collect()
}

fn sqp_step(world: &WorldParams, params: &TransitParams, qo: &Pose2, path: &[[f64; 4]], radius: f64) -> Option<Vec<[f64; 4]>> {
    let n_in = path.len() - 2;
    let n = 4 * n_in;
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut g = DVector::<f64>::zeros(n);
    for t in 0..n_in {
        let (prev, here, next) = (path[t], path[t + 1], path[t + 2]);
        for k in 0..4 {
            let r = 4 * t + k;
            h[(r, r)] = 4.0 + 2.0 * SQP_REG;
            if t + 1 < n_in {
                h[(r, r + 4)] = -2.0;
                h[(r + 4, r)] = -2.0;
            }
            g[r] = 2.0 * (2.0 * here[k] - prev[k] - next[k]);
        }
    }
    let mut rows: Vec<(usize, [f64; 4], f64)> = Vec::new();
    let fd = 1e-6;
    for t in 0..n_in {
        let q = path[t + 1];
        let d0 = pair_distances(world, &q, qo);
        let active: Vec<usize> = (0..d0.len()).filter(|&j| d0[j] < params.eps + SQP_ACTIVE_MARGIN).collect();
        if active.is_empty() {
            continue;
        }
        let mut grads = vec![[0.0; 4]; d0.len()];
        for k in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += fd;
            qm[k] -= fd;
            let dp = pair_distances(world, &qp, qo);
            let dm = pair_distances(world, &qm, qo);
            for &j in &active {
                grads[j][k] = (dp[j] - dm[j]) / (2.0 * fd);
            }
        }
        for &j in &active {
            // d + grad . delta >= eps
            rows.push((t, grads[j].map(|v| -v), d0[j] - params.eps));
        }
    }
    let limits = [world.arms.left.joint_limits, world.arms.right.joint_limits];
    let m = rows.len() + 2 * n;
    let mut a = DMatrix::<f64>::zeros(m, n);
    let mut b = DVector::<f64>::zeros(m);
    for (i, (t, row, rhs)) in rows.iter().enumerate() {
        for k in 0..4 {
            a[(i, 4 * t + k)] = row[k];
        }
        b[i] = rhs.max(0.0);
    }
    let base = rows.len();
    for t in 0..n_in {
        for k in 0..4 {
            let r = 4 * t + k;
            let [lo, hi] = limits[k / 2][k % 2];
            let q = path[t + 1][k];
            a[(base + 2 * r, r)] = 1.0;
            b[base + 2 * r] = radius.min(hi - q).max(0.0);
            a[(base + 2 * r + 1, r)] = -1.0;
            b[base + 2 * r + 1] = radius.min(q - lo).max(0.0);
        }
    }
    let sol = QpProblem::new(h, g, a, b).ok()?.solve().ok()?;
    let mut out = path.to_vec();
    for t in 0..n_in {
        for k in 0..4 {
            out[t + 1][k] += sol.x[4 * t + k];
        }
    }
    Some(out)
}

/// Collision-free regrasp: retreat from the object, RRT-Connect in joint
/// space with clearance `eps`, smooth, approach the goal grasp. The object
/// never moves.
pub fn transit_plan(world: &WorldParams, params: &TransitParams, q: &SystemConfig, qa_goal: &[f64; 4]) -> Result<TransitResult, PlannerError> {
    if q.qa == *qa_goal {
        return Ok(TransitResult { inputs: vec![], configs: vec![*q] });
    }
    let qo = q.qo;
    let goal_cfg = SystemConfig { qa: *qa_goal, qo };
    for c in [q, &goal_cfg] {
        if !qa_within_limits(world, &c.qa) || first_violation(world, c, PairMask::ALL, 0.0).is_some() {
            return Err(PlannerError::InvalidEndpoint);
        }
    }
    let r0 = retreat(world, &q.qa, &qo, params.eps).ok_or(PlannerError::NoPathFound)?;
    let r1 = retreat(world, qa_goal, &qo, params.eps).ok_or(PlannerError::NoPathFound)?;
    if !clear(world, &r0, &qo, params.eps) || !clear(world, &r1, &qo, params.eps) {
        return Err(PlannerError::NoPathFound);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let raw = rrt_connect(world, params, &qo, r0, r1, &mut rng).ok_or(PlannerError::NoPathFound)?;
    let smooth = smooth_path(world, params, &qo, &raw, &mut rng);

    let mut way = vec![q.qa];
    if r0 != q.qa {
        way.push(r0);
    }
    for w in smooth.windows(2) {
        let k = pieces(&w[0], &w[1], params.out_step());
        for s in 1..=k {
            way.push(lerp4(&w[0], &w[1], s as f64 / k as f64));
        }
    }
    if r1 != *qa_goal {
        way.push(*qa_goal);
    }
    let inputs: Vec<ControlInput> = way[1..].iter().map(|u| ControlInput { u: *u }).collect();
    let configs = replay(world, q, &inputs).map_err(|(t, e)| PlannerError::Replay(t, e))?;
    debug_assert!(configs.iter().all(|c| c.qo == qo));
    Ok(TransitResult { inputs, configs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{generate_grasp, GraspSpec, Obstacle};
    use std::f64::consts::PI;

    fn free_world() -> WorldParams {
        WorldParams { obstacles: vec![], ..WorldParams::default() }
    }

    fn grasp(w: &WorldParams, qo: Pose2) -> SystemConfig {
        generate_grasp(w, &qo, &GraspSpec::new(PI / 2.0)).unwrap()
    }

    fn assert_replays(w: &WorldParams, r: &TransferResult) {
        let again = replay(w, &r.configs[0], &r.inputs).unwrap();
        assert_eq!(again, r.configs);
    }

    #[test]
    fn transfer_already_at_goal() {
        let w = free_world();
        let q = grasp(&w, Pose2::new(0.5, 0.0, 0.0));
        let r = transfer_plan(&w, &TransferParams::default(), &q, &q.qo, None).unwrap();
        assert!(r.reached && r.inputs.is_empty());
    }

    #[test]
    fn transfer_short_translation() {
        let w = free_world();
        let q = grasp(&w, Pose2::new(0.5, 0.0, 0.0));
        let p = TransferParams::default();
        let r = transfer_plan(&w, &p, &q, &Pose2::new(0.55, 0.0, 0.0), None).unwrap();
        assert!(r.reached && r.final_error <= p.reach_tol);
        assert!(r.inputs.len() <= p.horizon);
        assert_replays(&w, &r);
    }

    #[test]
    fn transfer_needs_grasp() {
        let w = free_world();
        let mut q = grasp(&w, Pose2::new(0.5, 0.0, 0.0));
        q.qo.x += 0.05;
        assert_eq!(transfer_plan(&w, &TransferParams::default(), &q, &Pose2::new(0.4, 0.0, 0.0), None), Err(PlannerError::NotGrasped));
    }

    #[test]
    fn transfer_blocked_by_wall_of_obstacles() {
        let mut w = free_world();
        for k in -4..=4 {
            w.obstacles.push(Obstacle { center: [0.62, 0.05 * k as f64], radius: 0.07 });
        }
        let q = grasp(&w, Pose2::new(0.4, 0.0, 0.0));
        let r = transfer_plan(&w, &TransferParams::default(), &q, &Pose2::new(0.8, 0.0, 0.0), None).unwrap();
        assert!(!r.reached);
        assert_replays(&w, &r);
    }

    #[test]
    fn reference_shapes() {
        let a = Pose2::new(0.0, 0.0, 3.0);
        let b = Pose2::new(1.0, 0.0, -3.0);
        let refs = references(&a, &b, Some(&Pose2::new(0.5, 0.5, 0.0)), 4);
        assert_eq!(refs.len(), 4);
        // shortest arc across the seam
        assert!((refs[0][1][2] - (2.0 * PI - 3.0)).abs() < 1e-12);
        assert_eq!(refs[1].len(), 3);
        assert!((refs[2][1][1] - 0.1).abs() < 1e-12 && (refs[3][1][1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn transit_identity_and_object_invariance() {
        let w = WorldParams::default();
        let p = TransitParams::default();
        let qo = Pose2::new(0.5, 0.0, 0.0);
        let a = grasp(&w, qo);
        assert!(transit_plan(&w, &p, &a, &a.qa).unwrap().inputs.is_empty());
        let b = generate_grasp(&w, &qo, &GraspSpec::new(0.0)).unwrap();
        let r = transit_plan(&w, &p, &a, &b.qa).unwrap();
        assert!(r.configs.iter().all(|c| c.qo == qo));
        assert_eq!(r.configs.last().unwrap().qa, b.qa);
        assert_eq!(replay(&w, &a, &r.inputs).unwrap(), r.configs);
        // interior waypoints keep clearance eps
        let n = r.configs.len();
        for c in &r.configs[2..n - 2] {
            assert!(collision_check(&w, c).iter().all(|(_, d)| *d >= p.eps - 1e-12));
        }
    }

    #[test]
    fn transit_is_deterministic() {
        let w = WorldParams::default();
        let p = TransitParams { rng_seed: 11, ..TransitParams::default() };
        let qo = Pose2::new(0.45, 0.1, 0.7);
        let a = generate_grasp(&w, &qo, &GraspSpec::new(1.2)).unwrap();
        let b = generate_grasp(&w, &qo, &GraspSpec::new(-0.4)).unwrap();
        assert_eq!(transit_plan(&w, &p, &a, &b.qa), transit_plan(&w, &p, &a, &b.qa));
    }

    #[test]
    fn smoothing_straightens_zigzag() {
        let w = free_world();
        let p = TransitParams::default();
        let qo = Pose2::new(2.0, 2.0, 0.0);
        let mut path = vec![];
        for t in 0..9 {
            let z = if t % 2 == 0 { 0.0 } else { 0.3 };
            path.push([-0.8 + 0.1 * t as f64, 1.0 + z, 0.5, -1.0]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = smooth_path(&w, &p, &qo, &path, &mut rng);
        assert!(path_cost(&out) < path_cost(&path));
        assert_eq!(out.first(), path.first());
        assert_eq!(out.last(), path.last());
        let straight = vec![path[0], path[8]];
        assert_eq!(smooth_path(&w, &p, &qo, &straight, &mut rng), straight);
    }
}
