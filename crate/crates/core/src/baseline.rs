//! ContactRRT-style baseline: an RRT over object poses whose extend step is
//! the same transfer planner the graph planner uses, with regrasps inserted
//! when a node's grasp cannot make progress.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cover::{default_grasp_angles, first_grasp};
use crate::planner::{FailureKind, FullPlan, PlanFailure, Planners, Query, Segment};
use crate::planners::{transfer_plan, transit_plan, TransitParams};
use crate::se2::{distance, lerp_pose, Pose2};
use crate::system::{generate_grasp, replay, task_cost, ControlInput, GraspSpec, SystemConfig, WorldParams};

/// Grasp angles tried at the start and on regrasps.
pub const BASELINE_GRASP_ANGLES: usize = 8;

/// An extension that moves the object less than this counts as stuck.
const MIN_PROGRESS: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub max_iters: usize,
    pub goal_bias: f64,
    /// Largest object displacement (SE(2) distance) attempted per extension.
    pub extend_budget: f64,
    pub shortcut_rounds: usize,
    pub rng_seed: u64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams { max_iters: 300, goal_bias: 0.2, extend_budget: 0.3, shortcut_rounds: 20, rng_seed: 0 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid baseline parameters: {0}")]
pub struct BaselineParamsError(&'static str);

impl BaselineParams {
    pub fn validate(&self) -> Result<(), BaselineParamsError> {
        if self.max_iters == 0 {
            return Err(BaselineParamsError("max_iters must be positive"));
        }
        if !(self.goal_bias > 0.0 && self.goal_bias <= 1.0) {
            return Err(BaselineParamsError("goal_bias must be in (0, 1]"));
        }
        if !(self.extend_budget > 0.0 && self.extend_budget.is_finite()) {
            return Err(BaselineParamsError("extend_budget must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Piece {
    Transfer(Vec<SystemConfig>, Vec<ControlInput>),
    Transit(Vec<SystemConfig>, Vec<ControlInput>),
}

impl Piece {
    fn configs(&self) -> &[SystemConfig] {
        match self {
            Piece::Transfer(c, _) | Piece::Transit(c, _) => c,
        }
    }
}

struct Node {
    config: SystemConfig,
    parent: Option<usize>,
    /// Motion from the parent to this node.
    pieces: Vec<Piece>,
}

fn sample_pose(world: &WorldParams, rng: &mut ChaCha8Rng) -> Pose2 {
    let w = &world.workspace;
    Pose2::new(rng.gen_range(w.x[0]..w.x[1]), rng.gen_range(w.y[0]..w.y[1]), rng.gen_range(w.theta[0]..w.theta[1]))
}

struct Extender<'a> {
    world: &'a WorldParams,
    planners: &'a Planners,
    angles: Vec<f64>,
}

impl Extender<'_> {
    /// Transfer toward `target`; `None` when the object barely moves.
    fn transfer(&self, from: &SystemConfig, target: &Pose2) -> Option<Piece> {
        let r = transfer_plan(self.world, &self.planners.transfer, from, target, None).ok()?;
        (distance(&r.last().qo, &from.qo) >= MIN_PROGRESS).then(|| Piece::Transfer(r.configs, r.inputs))
    }

    /// A different grasp at the same object pose, reached by a transit.
    fn regrasp(&self, from: &SystemConfig, rng: &mut ChaCha8Rng) -> Option<Piece> {
        let start = rng.gen_range(0..self.angles.len());
        for i in 0..self.angles.len() {
            let phi = self.angles[(start + i) % self.angles.len()];
            let Ok(g) = generate_grasp(self.world, &from.qo, &GraspSpec::new(phi)) else { continue };
            if g.qa == from.qa {
                continue;
            }
            let psi = TransitParams { rng_seed: rng.gen(), ..self.planners.transit };
            if let Ok(t) = transit_plan(self.world, &psi, from, &g.qa) {
                return Some(Piece::Transit(t.configs, t.inputs));
            }
        }
        None
    }

    fn extend(&self, from: &SystemConfig, target: &Pose2, rng: &mut ChaCha8Rng) -> Option<Vec<Piece>> {
        if let Some(p) = self.transfer(from, target) {
            return Some(vec![p]);
        }
        let t = self.regrasp(from, rng)?;
        let mid = *t.configs().last().unwrap();
        match self.transfer(&mid, target) {
            Some(p) => Some(vec![t, p]),
            None => Some(vec![t]),
        }
    }
}

/// Flattens pieces into alternating Transfer/Transit segments that start and
/// end with a (possibly empty) Transfer.
fn to_segments(start: &SystemConfig, pieces: &[Piece]) -> Vec<Segment> {
    let mut segments: Vec<Segment> = vec![Segment::Transfer { set: None, configs: vec![*start], inputs: vec![] }];
    for p in pieces {
        let (transit, configs, inputs) = match p {
            Piece::Transfer(c, u) => (false, c, u),
            Piece::Transit(c, u) => (true, c, u),
        };
        if segments.last().unwrap().is_transit() != transit {
            let at = *segments.last().unwrap().configs().last().unwrap();
            segments.push(if transit {
                Segment::Transit { from: None, to: None, configs: vec![at], inputs: vec![] }
            } else {
                Segment::Transfer { set: None, configs: vec![at], inputs: vec![] }
            });
        }
        match segments.last_mut().unwrap() {
            Segment::Transfer { configs: c, inputs: u, .. } | Segment::Transit { configs: c, inputs: u, .. } => {
                c.extend_from_slice(&configs[1..]);
                u.extend_from_slice(inputs);
            }
        }
    }
    if segments.last().unwrap().is_transit() {
        let at = *segments.last().unwrap().configs().last().unwrap();
        segments.push(Segment::Transfer { set: None, configs: vec![at], inputs: vec![] });
    }
    segments
}

fn assemble(world: &WorldParams, q: &Query, start: &SystemConfig, pieces: &[Piece]) -> FullPlan {
    let mut plan = FullPlan { query: *q, segments: to_segments(start, pieces), total_cost: 0.0, object_path: None };
    plan.total_cost = task_cost(&plan.configs());
    debug_assert!(plan.verify(world).is_ok());
    plan
}

/// Pieces with their configurations re-simulated from `from`; `None` if the
/// replay fails or a transit would move the object.
fn resimulate(world: &WorldParams, from: &SystemConfig, pieces: &[Piece]) -> Option<Vec<Piece>> {
    let mut cur = *from;
    let mut out = Vec::with_capacity(pieces.len());
    for p in pieces {
        let (transit, inputs) = match p {
            Piece::Transfer(_, u) => (false, u),
            Piece::Transit(_, u) => (true, u),
        };
        let configs = replay(world, &cur, inputs).ok()?;
        if transit && configs.iter().any(|c| c.qo != cur.qo) {
            return None;
        }
        cur = *configs.last().unwrap();
        out.push(if transit { Piece::Transit(configs, inputs.clone()) } else { Piece::Transfer(configs, inputs.clone()) });
    }
    Some(out)
}

/// Shortcutting between path nodes: a direct transfer from node `i` to the
/// object pose of node `j`, spliced in front of the remaining motion when the
/// object poses agree and the result still reaches the goal more cheaply.
fn shortcut(world: &WorldParams, ext: &Extender, q: &Query, start: &SystemConfig, nodes: Vec<Vec<Piece>>, rounds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Piece>> {
    let mut nodes = nodes;
    let flat = |n: &[Vec<Piece>]| n.concat();
    let reaches = |pieces: &[Piece]| {
        let end = pieces.last().map_or(*start, |p| *p.configs().last().unwrap());
        distance(&end.qo, &q.qo_goal) <= world.goal_tol
    };
    let cost = |pieces: &[Piece]| task_cost(&assemble(world, q, start, pieces).configs());
    let mut best = cost(&flat(&nodes));
    for _ in 0..rounds {
        if nodes.len() < 2 {
            break;
        }
        let i = rng.gen_range(0..nodes.len() - 1);
        let j = rng.gen_range(i + 1..nodes.len());
        let from = if i == 0 { *start } else { *nodes[i - 1].last().unwrap().configs().last().unwrap() };
        let target = nodes[j].last().unwrap().configs().last().unwrap().qo;
        let Ok(r) = transfer_plan(world, &ext.planners.transfer, &from, &target, None) else { continue };
        if !r.reached {
            continue;
        }
        let end = *r.last();
        let Some(rest) = resimulate(world, &end, &flat(&nodes[j + 1..])) else { continue };
        let mut candidate: Vec<Vec<Piece>> = nodes[..i].to_vec();
        candidate.push(vec![Piece::Transfer(r.configs, r.inputs)]);
        candidate.extend(rest.into_iter().map(|p| vec![p]));
        let pieces = flat(&candidate);
        if reaches(&pieces) {
            let c = cost(&pieces);
            if c < best {
                best = c;
                nodes = candidate;
            }
        }
    }
    nodes
}

pub fn contact_rrt(world: &WorldParams, planners: &Planners, q: &Query, params: &BaselineParams) -> Result<FullPlan, PlanFailure> {
    let fail = |kind| PlanFailure { kind, segment: None, sets: vec![] };
    let ext = Extender { world, planners, angles: default_grasp_angles(BASELINE_GRASP_ANGLES) };
    let start = first_grasp(world, &q.qo_start, &ext.angles).ok_or(fail(FailureKind::GraspGenFailed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut tree = vec![Node { config: start, parent: None, pieces: vec![] }];
    let mut goal_node = None;
    if distance(&start.qo, &q.qo_goal) <= world.goal_tol {
        goal_node = Some(0);
    }
    let mut iter = 0;
    while goal_node.is_none() && iter < params.max_iters {
        iter += 1;
        let sample = if rng.gen::<f64>() < params.goal_bias { q.qo_goal } else { sample_pose(world, &mut rng) };
        let near = (0..tree.len())
            .min_by(|&a, &b| distance(&tree[a].config.qo, &sample).total_cmp(&distance(&tree[b].config.qo, &sample)))
            .unwrap();
        let from = tree[near].config;
        let d = distance(&from.qo, &sample);
        let target = if d > params.extend_budget { lerp_pose(&from.qo, &sample, params.extend_budget / d) } else { sample };
        let Some(pieces) = ext.extend(&from, &target, &mut rng) else { continue };
        let end = *pieces.last().unwrap().configs().last().unwrap();
        tree.push(Node { config: end, parent: Some(near), pieces });
        let id = tree.len() - 1;
        if distance(&end.qo, &q.qo_goal) <= world.goal_tol {
            goal_node = Some(id);
        } else if distance(&end.qo, &q.qo_goal) <= params.extend_budget {
            if let Ok(r) = transfer_plan(world, &planners.transfer, &end, &q.qo_goal, None) {
                if r.reached {
                    let fin = *r.last();
                    tree.push(Node { config: fin, parent: Some(id), pieces: vec![Piece::Transfer(r.configs, r.inputs)] });
                    goal_node = Some(tree.len() - 1);
                }
            }
        }
    }
    let Some(mut n) = goal_node else { return Err(fail(FailureKind::NoPath)) };
    let mut chain = Vec::new();
    while let Some(p) = tree[n].parent {
        chain.push(std::mem::take(&mut tree[n].pieces));
        n = p;
    }
    chain.reverse();
    let chain = shortcut(world, &ext, q, &start, chain, params.shortcut_rounds, &mut rng);
    let plan = assemble(world, q, &start, &chain.concat());
    plan.verify(world).map_err(|_| fail(FailureKind::TransferFailed))?;
    Ok(plan)
}
