//! Two-stage planning: an object path through the set graph, then its
//! transcription into grasped transfers and regrasp transits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gcs::{sample_paths, shortest_path, GcsError, PathSolution};
use crate::graph::{augment_query, intersect_sets, sub_seed, waypoint_spacing, GraphError, MrsGraph};
use crate::planners::{regrasp_needed, transfer_geodesic, transit_plan, TransferParams, TransitParams};
use crate::reach::grasp_in_set;
use crate::se2::{distance, lerp_pose, ChartBox, Pose2};
use crate::system::{replay, task_cost, ControlInput, SystemConfig, WorldParams};

/// Upper bound on candidate paths per query.
pub const MAX_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub qo_start: Pose2,
    pub qo_goal: Pose2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Planners {
    pub transfer: TransferParams,
    pub transit: TransitParams,
}

impl Default for Planners {
    fn default() -> Self {
        Planners { transfer: TransferParams::default(), transit: TransitParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Segment {
    /// `set` is `None` for plans not made on the set graph.
    Transfer { set: Option<usize>, configs: Vec<SystemConfig>, inputs: Vec<ControlInput> },
    /// Regrasp with the object at rest. Empty when both sets hold the object
    /// with the same grasp.
    Transit { from: Option<usize>, to: Option<usize>, configs: Vec<SystemConfig>, inputs: Vec<ControlInput> },
}

impl Segment {
    pub fn configs(&self) -> &[SystemConfig] {
        match self {
            Segment::Transfer { configs, .. } | Segment::Transit { configs, .. } => configs,
        }
    }

    pub fn inputs(&self) -> &[ControlInput] {
        match self {
            Segment::Transfer { inputs, .. } | Segment::Transit { inputs, .. } => inputs,
        }
    }

    pub fn is_transit(&self) -> bool {
        matches!(self, Segment::Transit { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullPlan {
    pub query: Query,
    pub segments: Vec<Segment>,
    pub total_cost: f64,
    pub object_path: Option<PathSolution>,
}

impl FullPlan {
    pub fn initial(&self) -> &SystemConfig {
        &self.segments[0].configs()[0]
    }

    pub fn inputs(&self) -> Vec<ControlInput> {
        self.segments.iter().flat_map(|s| s.inputs().iter().copied()).collect()
    }

    /// The whole trajectory, each segment's first configuration shared with
    /// the previous segment's last.
    pub fn configs(&self) -> Vec<SystemConfig> {
        let mut out = vec![*self.initial()];
        for s in &self.segments {
            out.extend_from_slice(&s.configs()[1..]);
        }
        out
    }

    pub fn regrasps(&self) -> usize {
        self.segments.iter().filter(|s| s.is_transit() && !s.inputs().is_empty()).count()
    }

    /// Re-simulates the stored inputs from the initial configuration and
    /// checks configurations, goal region and cost.
    pub fn verify(&self, world: &WorldParams) -> Result<(), String> {
        let replayed = replay(world, self.initial(), &self.inputs()).map_err(|(t, e)| format!("step {t}: {e}"))?;
        if replayed != self.configs() {
            return Err("replayed configurations differ from the stored ones".into());
        }
        let end = replayed.last().unwrap().qo;
        let err = distance(&end, &self.query.qo_goal);
        if err > world.goal_tol {
            return Err(format!("final object pose is {err:.4} from the goal"));
        }
        for s in &self.segments {
            if s.is_transit() && s.configs().iter().any(|c| c.qo != s.configs()[0].qo) {
                return Err("object moved during a transit".into());
            }
        }
        if (task_cost(&replayed) - self.total_cost).abs() > 1e-9 {
            return Err("total cost does not match the trajectory".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureKind {
    StartUncovered,
    GoalUncovered,
    TransferFailed,
    GraspGenFailed,
    TransitFailed,
    NoPath,
}

impl FailureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FailureKind::StartUncovered => "start_uncovered",
            FailureKind::GoalUncovered => "goal_uncovered",
            FailureKind::TransferFailed => "transfer_failed",
            FailureKind::GraspGenFailed => "grasp_gen_failed",
            FailureKind::TransitFailed => "transit_failed",
            FailureKind::NoPath => "no_path",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFailure {
    pub kind: FailureKind,
    /// Index into the object path's vertex sequence, when the failure is
    /// tied to one.
    pub segment: Option<usize>,
    pub sets: Vec<usize>,
}

impl PlanFailure {
    fn new(kind: FailureKind) -> Self {
        PlanFailure { kind, segment: None, sets: vec![] }
    }

    fn at(kind: FailureKind, segment: usize, sets: Vec<usize>) -> Self {
        PlanFailure { kind, segment: Some(segment), sets }
    }
}

impl std::fmt::Display for PlanFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.kind.name())?;
        if let Some(s) = self.segment {
            write!(f, " at path vertex {s}")?;
        }
        if !self.sets.is_empty() {
            write!(f, " (sets {:?})", self.sets)?;
        }
        Ok(())
    }
}

fn stage1_error(e: GraphError) -> PlanFailure {
    match e {
        GraphError::StartUncovered => PlanFailure::new(FailureKind::StartUncovered),
        GraphError::GoalUncovered => PlanFailure::new(FailureKind::GoalUncovered),
        _ => PlanFailure::new(FailureKind::NoPath),
    }
}

fn gcs_error(_: GcsError) -> PlanFailure {
    PlanFailure::new(FailureKind::NoPath)
}

pub fn plan_stage1(g: &MrsGraph, q: &Query) -> Result<PathSolution, PlanFailure> {
    let qg = augment_query(g, &q.qo_start, &q.qo_goal).map_err(stage1_error)?;
    shortest_path(&qg).map_err(gcs_error)
}

fn pose(p: &[f64; 3]) -> Pose2 {
    Pose2::new(p[0], p[1], p[2])
}

/// Boundary pose for the grasp retry: a deterministic draw from the part of
/// the intersection within `radius` of `around`.
fn nearby_boundary_pose(g: &MrsGraph, from: usize, to: usize, around: &Pose2, radius: f64, seed: u64) -> Option<Pose2> {
    use rand::SeedableRng;
    let inter = intersect_sets(&g.sets[from].polytope, &g.sets[to].polytope).ok()??;
    let c = inter.polytope.chart_point_for(around).unwrap_or_else(|| around.chart());
    let bbox = ChartBox::new([c[0] - radius, c[1] - radius, c[2] - radius], [c[0] + radius, c[1] + radius, c[2] + radius]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let p = bbox.sample(&mut rng);
        if inter.polytope.contains_chart(&p) && (p - c).norm() <= radius {
            return Some(Pose2::from_chart(&p));
        }
    }
    None
}

/// Transcribes an object path into a replayable plan. `seed` makes transit
/// sampling and boundary retries deterministic.
pub fn translate(world: &WorldParams, planners: &Planners, g: &MrsGraph, sol: &PathSolution, q: &Query, seed: u64) -> Result<FullPlan, PlanFailure> {
    let seq = &sol.vertex_sequence;
    let pi = &planners.transfer;
    let first = seq[0];
    let mut cur = grasp_in_set(world, pi, &q.qo_start, &g.sets[first]).map_err(|_| PlanFailure::at(FailureKind::GraspGenFailed, 0, vec![first]))?;
    let mut segments = Vec::new();
    for (k, &v) in seq.iter().enumerate() {
        let m = &g.sets[v];
        let spacing = waypoint_spacing(m);
        let target = if k + 1 == seq.len() { q.qo_goal } else { pose(&sol.points[k][1]) };
        let r = transfer_geodesic(world, pi, &cur, &target, spacing).map_err(|_| PlanFailure::at(FailureKind::TransferFailed, k, vec![v]))?;
        if !r.reached {
            return Err(PlanFailure::at(FailureKind::TransferFailed, k, vec![v]));
        }
        let mut configs = r.configs;
        let mut inputs = r.inputs;
        cur = *configs.last().unwrap();
        if k + 1 == seq.len() {
            segments.push(Segment::Transfer { set: Some(v), configs, inputs });
            break;
        }
        let next = seq[k + 1];
        let fail = |kind| PlanFailure::at(kind, k, vec![v, next]);
        let grasp = match grasp_in_set(world, pi, &cur.qo, &g.sets[next]) {
            Ok(c) => c,
            Err(_) => {
                // One retry from a nearby pose inside the intersection.
                let alt = nearby_boundary_pose(g, v, next, &cur.qo, spacing, sub_seed(seed, &[k as u64, 1]))
                    .ok_or(fail(FailureKind::GraspGenFailed))?;
                let c2 = grasp_in_set(world, pi, &alt, &g.sets[next]).map_err(|_| fail(FailureKind::GraspGenFailed))?;
                let r2 = transfer_geodesic(world, pi, &cur, &alt, spacing).map_err(|_| fail(FailureKind::GraspGenFailed))?;
                let end = *r2.last();
                if !r2.reached || end.qo != alt {
                    return Err(fail(FailureKind::GraspGenFailed));
                }
                configs.extend_from_slice(&r2.configs[1..]);
                inputs.extend(r2.inputs);
                cur = end;
                c2
            }
        };
        segments.push(Segment::Transfer { set: Some(v), configs, inputs });
        if regrasp_needed(&cur, &grasp) {
            let psi = TransitParams { rng_seed: sub_seed(seed, &[k as u64, 2]), ..planners.transit };
            let t = transit_plan(world, &psi, &cur, &grasp.qa).map_err(|_| fail(FailureKind::TransitFailed))?;
            cur = *t.configs.last().unwrap();
            segments.push(Segment::Transit { from: Some(v), to: Some(next), configs: t.configs, inputs: t.inputs });
        } else {
            segments.push(Segment::Transit { from: Some(v), to: Some(next), configs: vec![cur], inputs: vec![] });
        }
    }
    let mut plan = FullPlan { query: *q, segments, total_cost: 0.0, object_path: Some(sol.clone()) };
    plan.total_cost = task_cost(&plan.configs());
    let last = seq.len() - 1;
    plan.verify(world).map_err(|_| PlanFailure::at(FailureKind::TransferFailed, last, vec![seq[last]]))?;
    Ok(plan)
}

/// Translates up to `k` cheapest object paths and keeps the cheapest
/// executable plan; when every candidate fails, the first one's failure is
/// reported.
pub fn plan(world: &WorldParams, g: &MrsGraph, planners: &Planners, q: &Query, k: usize, seed: u64) -> Result<FullPlan, PlanFailure> {
    let qg = augment_query(g, &q.qo_start, &q.qo_goal).map_err(stage1_error)?;
    let paths = sample_paths(&qg, k.clamp(1, MAX_PATHS), 1.0).map_err(gcs_error)?;
    if paths.is_empty() {
        return Err(PlanFailure::new(FailureKind::NoPath));
    }
    let results: Vec<Result<FullPlan, PlanFailure>> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| translate(world, planners, g, p, q, sub_seed(seed, &[i as u64])))
        .collect();
    let mut best: Option<FullPlan> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(p) => {
                if best.as_ref().map_or(true, |b| p.total_cost < b.total_cost) {
                    best = Some(p);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap())
}

/// Object poses along a path solution, for rendering: each vertex's
/// `x_in -> x_out` geodesic sampled at `n` points.
pub fn object_polyline(sol: &PathSolution, n: usize) -> Vec<Pose2> {
    let mut out = Vec::new();
    for [a, b] in &sol.points {
        let (pa, pb) = (pose(a), pose(b));
        for i in 0..=n.max(1) {
            out.push(lerp_pose(&pa, &pb, i as f64 / n.max(1) as f64));
        }
    }
    out
}
