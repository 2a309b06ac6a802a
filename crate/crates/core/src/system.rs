//! Desk-scale grasp-transport system: two planar two-link arms with point
//! fingers holding a disc antipodally, among static disc obstacles.
//!
//! The dynamics are quasi-static and deterministic. While both fingers sit on
//! antipodal points of the disc, commanded fingertip motion moves the object
//! rigidly; pulling the fingers apart releases it; otherwise the fingers move
//! freely and the object stays put.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se2::{wrap, Pose2};

/// Sub-samples per step for swept collision checking.
pub const SUBSTEPS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("joint {joint} = {value} outside [{lo}, {hi}]")]
    JointLimit { joint: usize, value: f64, lo: f64, hi: f64 },
    #[error("collision at sub-step {substep}: {pair:?} at {distance:.4}")]
    CollisionAtStep { substep: usize, pair: PairId, distance: f64 },
    #[error("finger separation {separation:.4} inconsistent with a rigid grasp")]
    RigidityViolation { separation: f64 },
    #[error("no collision-free grasp for this pose and grasp angle")]
    GraspInfeasible,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmParams {
    pub base: [f64; 2],
    pub link_lengths: [f64; 2],
    pub joint_limits: [[f64; 2]; 2],
}

impl ArmParams {
    pub fn reach(&self) -> f64 {
        self.link_lengths[0] + self.link_lengths[1]
    }

    fn within_limits(&self, j: &[f64; 2]) -> bool {
        (0..2).all(|k| j[k] >= self.joint_limits[k][0] && j[k] <= self.joint_limits[k][1])
    }

    /// Elbow and fingertip positions.
    fn points(&self, j: &[f64; 2]) -> ([f64; 2], [f64; 2]) {
        let [l1, l2] = self.link_lengths;
        let elbow = [self.base[0] + l1 * j[0].cos(), self.base[1] + l1 * j[0].sin()];
        let a = j[0] + j[1];
        (elbow, [elbow[0] + l2 * a.cos(), elbow[1] + l2 * a.sin()])
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let ok = self.link_lengths.iter().all(|l| l.is_finite() && *l > 0.0)
            && self.joint_limits.iter().all(|[lo, hi]| lo < hi)
            && self.base.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SystemError::InvalidParams(format!("bad arm parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arms {
    pub left: ArmParams,
    pub right: ArmParams,
}

impl Arms {
    pub fn get(&self, arm: usize) -> &ArmParams {
        if arm == 0 {
            &self.left
        } else {
            &self.right
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Object-space limits. `theta` is normally the full circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub theta: [f64; 2],
}

impl Workspace {
    pub fn contains(&self, q: &Pose2) -> bool {
        q.x >= self.x[0] && q.x <= self.x[1] && q.y >= self.y[0] && q.y <= self.y[1]
    }

    pub fn lo(&self) -> [f64; 3] {
        [self.x[0], self.y[0], self.theta[0]]
    }

    pub fn hi(&self) -> [f64; 3] {
        [self.x[1], self.y[1], self.theta[1]]
    }

    pub fn volume(&self) -> f64 {
        (self.x[1] - self.x[0]) * (self.y[1] - self.y[0]) * (self.theta[1] - self.theta[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub arms: Arms,
    pub object_radius: f64,
    pub obstacles: Vec<Obstacle>,
    pub workspace: Workspace,
    pub contact_tol: f64,
    pub goal_tol: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        let arm = |y: f64| ArmParams {
            base: [0.0, y],
            link_lengths: [0.55, 0.55],
            joint_limits: [[-2.8, 2.8], [-2.8, 2.8]],
        };
        WorldParams {
            arms: Arms { left: arm(0.6), right: arm(-0.6) },
            object_radius: 0.12,
            obstacles: vec![
                Obstacle { center: [0.74, 0.36], radius: 0.07 },
                Obstacle { center: [0.74, -0.36], radius: 0.07 },
            ],
            workspace: Workspace { x: [0.25, 0.80], y: [-0.55, 0.55], theta: [-PI, PI] },
            contact_tol: 0.005,
            goal_tol: 0.1,
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        self.arms.left.validate()?;
        self.arms.right.validate()?;
        let w = &self.workspace;
        let finite = [w.x, w.y, w.theta].iter().flatten().all(|v| v.is_finite());
        if !(finite && w.x[0] < w.x[1] && w.y[0] < w.y[1] && w.theta[0] < w.theta[1]) {
            return Err(SystemError::InvalidParams("workspace bounds must be finite and ordered".into()));
        }
        if !(self.object_radius > 0.0 && self.contact_tol > 0.0 && self.goal_tol > 0.0) {
            return Err(SystemError::InvalidParams("object radius, contact tolerance and goal tolerance must be positive".into()));
        }
        if self.obstacles.iter().any(|o| !(o.radius > 0.0) || !o.center.iter().all(|v| v.is_finite())) {
            return Err(SystemError::InvalidParams("obstacle radii must be positive".into()));
        }
        Ok(())
    }
}

/// Joint angles of both arms (left 0-1, right 2-3) plus the object pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub qa: [f64; 4],
    pub qo: Pose2,
}

impl SystemConfig {
    pub fn arm_joints(&self, arm: usize) -> [f64; 2] {
        [self.qa[2 * arm], self.qa[2 * arm + 1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspSpec {
    pub phi: f64,
}

impl GraspSpec {
    pub fn new(phi: f64) -> Self {
        GraspSpec { phi: wrap(phi) }
    }

    /// Left and right contact points for an object pose.
    pub fn contacts(&self, world: &WorldParams, qo: &Pose2) -> [[f64; 2]; 2] {
        let a = qo.theta + self.phi;
        let (s, c) = a.sin_cos();
        let r = world.object_radius;
        [[qo.x + r * c, qo.y + r * s], [qo.x - r * c, qo.y - r * s]]
    }
}

/// Commanded joint positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub u: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairId {
    FingerObstacle { finger: usize, obstacle: usize },
    FingerObject { finger: usize },
    ObjectObstacle { obstacle: usize },
    LinkObstacle { arm: usize, link: usize, obstacle: usize },
}

pub fn forward_kinematics(arm: &ArmParams, joints: [f64; 2]) -> Result<[f64; 2], SystemError> {
    for k in 0..2 {
        let [lo, hi] = arm.joint_limits[k];
        if !(joints[k] >= lo && joints[k] <= hi) {
            return Err(SystemError::JointLimit { joint: k, value: joints[k], lo, hi });
        }
    }
    Ok(arm.points(&joints).1)
}

/// Closed-form IK. Elbow-up (positive elbow angle) comes first; a target on
/// the reach boundary has the single straight-arm solution.
pub fn inverse_kinematics(arm: &ArmParams, target: [f64; 2]) -> Vec<[f64; 2]> {
    let [l1, l2] = arm.link_lengths;
    let dx = target[0] - arm.base[0];
    let dy = target[1] - arm.base[1];
    let d2 = dx * dx + dy * dy;
    let c2 = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !c2.is_finite() || c2.abs() > 1.0 + 1e-12 {
        return Vec::new();
    }
    let c2 = c2.clamp(-1.0, 1.0);
    let e = c2.acos();
    let elbows: &[f64] = if e.abs() < 1e-12 || (PI - e).abs() < 1e-12 { &[e] } else { &[e, -e] };
    let heading = dy.atan2(dx);
    let mut out = Vec::with_capacity(2);
    for &j2 in elbows {
        let j1 = wrap(heading - (l2 * j2.sin()).atan2(l1 + l2 * j2.cos()));
        let j = [j1, j2];
        if arm.within_limits(&j) {
            out.push(j);
        }
    }
    out
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn segment_point_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    norm([ap[0] - t * ab[0], ap[1] - t * ab[1]])
}

/// Elbow and fingertip positions of both arms.
pub fn arm_points(world: &WorldParams, qa: &[f64; 4]) -> [([f64; 2], [f64; 2]); 2] {
    [
        world.arms.left.points(&[qa[0], qa[1]]),
        world.arms.right.points(&[qa[2], qa[3]]),
    ]
}

pub fn fingertips(world: &WorldParams, qa: &[f64; 4]) -> [[f64; 2]; 2] {
    let p = arm_points(world, qa);
    [p[0].1, p[1].1]
}

/// Finger-object signed distance: contact within `contact_tol` reads as
/// zero, deeper penetration is reported beyond the tolerance band.
fn finger_object_distance(world: &WorldParams, finger: [f64; 2], qo: &Pose2) -> f64 {
    let d = norm(sub(finger, [qo.x, qo.y])) - world.object_radius;
    if d >= 0.0 {
        d
    } else if d >= -world.contact_tol {
        0.0
    } else {
        d + world.contact_tol
    }
}

/// Which pair groups to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PairMask {
    pub finger_object: bool,
}

impl PairMask {
    pub const ALL: PairMask = PairMask { finger_object: true };
    pub const HELD: PairMask = PairMask { finger_object: false };
}

/// Visits every pair's signed distance; stops early when `f` returns false.
pub(crate) fn for_each_pair(
    world: &WorldParams,
    c: &SystemConfig,
    mask: PairMask,
    mut f: impl FnMut(PairId, f64) -> bool,
) {
    let pts = arm_points(world, &c.qa);
    let obj = [c.qo.x, c.qo.y];
    for (finger, (_, tip)) in pts.iter().enumerate() {
        for (i, o) in world.obstacles.iter().enumerate() {
            if !f(PairId::FingerObstacle { finger, obstacle: i }, norm(sub(*tip, o.center)) - o.radius) {
                return;
            }
        }
        if mask.finger_object && !f(PairId::FingerObject { finger }, finger_object_distance(world, *tip, &c.qo)) {
            return;
        }
    }
    for (i, o) in world.obstacles.iter().enumerate() {
        if !f(PairId::ObjectObstacle { obstacle: i }, norm(sub(obj, o.center)) - o.radius - world.object_radius) {
            return;
        }
    }
    for (arm, (elbow, tip)) in pts.iter().enumerate() {
        let base = world.arms.get(arm).base;
        for (i, o) in world.obstacles.iter().enumerate() {
            for (link, (a, b)) in [(base, *elbow), (*elbow, *tip)].into_iter().enumerate() {
                let d = segment_point_distance(a, b, o.center) - o.radius;
                if !f(PairId::LinkObstacle { arm, link, obstacle: i }, d) {
                    return;
                }
            }
        }
    }
}

/// Signed distances of every collision pair.
pub fn collision_check(world: &WorldParams, c: &SystemConfig) -> Vec<(PairId, f64)> {
    let mut out = Vec::new();
    for_each_pair(world, c, PairMask::ALL, |id, d| {
        out.push((id, d));
        true
    });
    out
}

/// First pair closer than `threshold`, if any.
pub(crate) fn first_violation(world: &WorldParams, c: &SystemConfig, mask: PairMask, threshold: f64) -> Option<(PairId, f64)> {
    let mut hit = None;
    for_each_pair(world, c, mask, |id, d| {
        if d < threshold {
            hit = Some((id, d));
            false
        } else {
            true
        }
    });
    hit
}

pub fn qa_within_limits(world: &WorldParams, qa: &[f64; 4]) -> bool {
    world.arms.left.within_limits(&[qa[0], qa[1]]) && world.arms.right.within_limits(&[qa[2], qa[3]])
}

/// Whether both fingers sit on antipodal points of the object, within
/// `contact_tol`.
pub fn is_grasped(world: &WorldParams, c: &SystemConfig) -> bool {
    let [l, r] = fingertips(world, &c.qa);
    grasped_tips(world, l, r, &c.qo)
}

fn grasped_tips(world: &WorldParams, l: [f64; 2], r: [f64; 2], qo: &Pose2) -> bool {
    let d = sub(l, r);
    let sep = norm(d);
    if sep < 1e-12 {
        return false;
    }
    let u = [d[0] / sep, d[1] / sep];
    let rad = world.object_radius;
    let cl = [qo.x + rad * u[0], qo.y + rad * u[1]];
    let cr = [qo.x - rad * u[0], qo.y - rad * u[1]];
    norm(sub(l, cl)) <= world.contact_tol && norm(sub(r, cr)) <= world.contact_tol
}

/// The grasp angle the fingers currently realise on the object.
pub fn current_grasp(world: &WorldParams, c: &SystemConfig) -> GraspSpec {
    let [l, r] = fingertips(world, &c.qa);
    GraspSpec::new((l[1] - r[1]).atan2(l[0] - r[0]) - c.qo.theta)
}

/// Fingertip positions for an object pose with the fingers held at the same
/// object-frame coordinates they have in `c`.
pub(crate) fn carried_fingertips(world: &WorldParams, c: &SystemConfig, target: &Pose2) -> [[f64; 2]; 2] {
    let tips = fingertips(world, &c.qa);
    let (s0, c0) = c.qo.theta.sin_cos();
    let (s1, c1) = target.theta.sin_cos();
    tips.map(|p| {
        let d = sub(p, [c.qo.x, c.qo.y]);
        let local = [c0 * d[0] + s0 * d[1], -s0 * d[0] + c0 * d[1]];
        [target.x + c1 * local[0] - s1 * local[1], target.y + s1 * local[0] + c1 * local[1]]
    })
}

/// IK for both fingertips, picking per arm the branch closest to `near`.
pub(crate) fn ik_near(world: &WorldParams, tips: &[[f64; 2]; 2], near: &[f64; 4]) -> Option<[f64; 4]> {
    let mut qa = [0.0; 4];
    for arm in 0..2 {
        let cur = [near[2 * arm], near[2 * arm + 1]];
        let sols = inverse_kinematics(world.arms.get(arm), tips[arm]);
        let best = sols.into_iter().min_by(|a, b| {
            let da = (a[0] - cur[0]).abs().max((a[1] - cur[1]).abs());
            let db = (b[0] - cur[0]).abs().max((b[1] - cur[1]).abs());
            da.total_cmp(&db)
        })?;
        qa[2 * arm] = best[0];
        qa[2 * arm + 1] = best[1];
    }
    Some(qa)
}

/// Antipodal grasp of the object at `qo`: left finger on the `+phi` contact,
/// right finger on the opposite one. Elbow branches are tried in the fixed
/// order (up, up), (up, down), (down, up), (down, down).
pub fn generate_grasp(world: &WorldParams, qo: &Pose2, grasp: &GraspSpec) -> Result<SystemConfig, SystemError> {
    let contacts = grasp.contacts(world, qo);
    let left = inverse_kinematics(&world.arms.left, contacts[0]);
    let right = inverse_kinematics(&world.arms.right, contacts[1]);
    for l in &left {
        for r in &right {
            let c = SystemConfig { qa: [l[0], l[1], r[0], r[1]], qo: *qo };
            if first_violation(world, &c, PairMask::ALL, 0.0).is_none() {
                return Ok(c);
            }
        }
    }
    Err(SystemError::GraspInfeasible)
}

fn lerp4(a: &[f64; 4], b: &[f64; 4], s: f64) -> [f64; 4] {
    std::array::from_fn(|k| a[k] + s * (b[k] - a[k]))
}

/// How a step acts on the object.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Free,
    Rigid { to: Pose2 },
}

fn step_mode(world: &WorldParams, c: &SystemConfig, qa1: &[f64; 4]) -> Result<Mode, SystemError> {
    let [l0, r0] = fingertips(world, &c.qa);
    if !grasped_tips(world, l0, r0, &c.qo) {
        return Ok(Mode::Free);
    }
    let [l1, r1] = fingertips(world, qa1);
    let sep = norm(sub(l1, r1));
    let d = 2.0 * world.object_radius;
    if sep > d + world.contact_tol {
        // Fingers opened: the object is released where it is.
        return Ok(Mode::Free);
    }
    if sep < d - world.contact_tol {
        return Err(SystemError::RigidityViolation { separation: sep });
    }
    // Rigid transform carrying the old finger pair onto the new one.
    let m0 = [(l0[0] + r0[0]) / 2.0, (l0[1] + r0[1]) / 2.0];
    let m1 = [(l1[0] + r1[0]) / 2.0, (l1[1] + r1[1]) / 2.0];
    let a0 = (l0[1] - r0[1]).atan2(l0[0] - r0[0]);
    let a1 = (l1[1] - r1[1]).atan2(l1[0] - r1[0]);
    let dth = wrap(a1 - a0);
    let (s, co) = dth.sin_cos();
    let rel = sub([c.qo.x, c.qo.y], m0);
    let to = Pose2::new(
        m1[0] + co * rel[0] - s * rel[1],
        m1[1] + s * rel[0] + co * rel[1],
        c.qo.theta + dth,
    );
    Ok(Mode::Rigid { to })
}

/// One quasi-static step. On rejection nothing moves; the error says why.
pub fn step_dynamics(world: &WorldParams, c: &SystemConfig, u: &ControlInput) -> Result<SystemConfig, SystemError> {
    for arm in 0..2 {
        let a = world.arms.get(arm);
        for k in 0..2 {
            let v = u.u[2 * arm + k];
            let [lo, hi] = a.joint_limits[k];
            if !(v >= lo && v <= hi) {
                return Err(SystemError::JointLimit { joint: 2 * arm + k, value: v, lo, hi });
            }
        }
    }
    let mode = step_mode(world, c, &u.u)?;
    let (mask, to) = match mode {
        Mode::Free => (PairMask::ALL, c.qo),
        Mode::Rigid { to } => (PairMask::HELD, to),
    };
    for k in 1..=SUBSTEPS {
        let s = k as f64 / SUBSTEPS as f64;
        let qo = if to == c.qo { c.qo } else { crate::se2::lerp_pose(&c.qo, &to, s) };
        let sub_c = SystemConfig { qa: lerp4(&c.qa, &u.u, s), qo };
        if let Some((pair, distance)) = first_violation(world, &sub_c, mask, 0.0) {
            return Err(SystemError::CollisionAtStep { substep: k, pair, distance });
        }
    }
    Ok(SystemConfig { qa: u.u, qo: to })
}

/// Re-simulates `inputs` from `start`, returning every visited configuration
/// (including `start`).
pub fn replay(world: &WorldParams, start: &SystemConfig, inputs: &[ControlInput]) -> Result<Vec<SystemConfig>, (usize, SystemError)> {
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(*start);
    let mut c = *start;
    for (t, u) in inputs.iter().enumerate() {
        c = step_dynamics(world, &c, u).map_err(|e| (t, e))?;
        out.push(c);
    }
    Ok(out)
}

/// Actuated path length `sum |qa_{t+1} - qa_t|`.
pub fn task_cost(configs: &[SystemConfig]) -> f64 {
    configs
        .windows(2)
        .map(|w| (0..4).map(|k| (w[1].qa[k] - w[0].qa[k]).powi(2)).sum::<f64>().sqrt())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_arm() -> ArmParams {
        ArmParams {
            base: [0.0, 0.0],
            link_lengths: [1.0, 1.0],
            joint_limits: [[-3.0, 3.0], [-3.0, 3.0]],
        }
    }

    fn free_world() -> WorldParams {
        WorldParams { obstacles: vec![], ..WorldParams::default() }
    }

    #[test]
    fn fk_examples() {
        let a = unit_arm();
        let p = forward_kinematics(&a, [0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
        let p = forward_kinematics(&a, [PI / 2.0, -PI / 2.0]).unwrap();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-15);
        assert!(matches!(forward_kinematics(&a, [3.5, 0.0]), Err(SystemError::JointLimit { .. })));
    }

    #[test]
    fn ik_boundary_and_out_of_reach() {
        let a = unit_arm();
        let sols = inverse_kinematics(&a, [2.0, 0.0]);
        assert_eq!(sols.len(), 1);
        assert_abs_diff_eq!(sols[0][1], 0.0, epsilon = 1e-6);
        assert!(inverse_kinematics(&a, [2.01, 0.0]).is_empty());
        let sols = inverse_kinematics(&a, [1.0, 1.0]);
        assert_eq!(sols.len(), 2);
        assert!(sols[0][1] > 0.0 && sols[1][1] < 0.0);
    }

    #[test]
    fn finger_on_surface_is_zero_distance() {
        let w = free_world();
        let qo = Pose2::new(0.5, 0.0, 0.0);
        let c = generate_grasp(&w, &qo, &GraspSpec::new(PI / 2.0)).unwrap();
        for (id, d) in collision_check(&w, &c) {
            if matches!(id, PairId::FingerObject { .. }) {
                assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn concentric_object_and_obstacle() {
        let mut w = free_world();
        w.obstacles.push(Obstacle { center: [0.5, 0.0], radius: 0.07 });
        let c = SystemConfig { qa: [-1.0, 0.5, 1.0, -0.5], qo: Pose2::new(0.5, 0.0, 0.0) };
        let d = collision_check(&w, &c)
            .into_iter()
            .find(|(id, _)| *id == PairId::ObjectObstacle { obstacle: 0 })
            .unwrap()
            .1;
        assert_abs_diff_eq!(d, -(0.12 + 0.07), epsilon = 1e-15);
    }

    #[test]
    fn grasp_generation() {
        let w = WorldParams::default();
        let qo = Pose2::new(0.5, 0.0, 0.0);
        let g = GraspSpec::new(PI / 2.0);
        let c = generate_grasp(&w, &qo, &g).unwrap();
        let tips = fingertips(&w, &c.qa);
        let want = g.contacts(&w, &qo);
        for k in 0..2 {
            assert!(norm(sub(tips[k], want[k])) <= 1e-9);
        }
        assert!(is_grasped(&w, &c));
        assert_abs_diff_eq!(current_grasp(&w, &c).phi, g.phi, epsilon = 1e-9);
        assert_eq!(
            generate_grasp(&w, &Pose2::new(3.0, 0.0, 0.0), &g),
            Err(SystemError::GraspInfeasible)
        );
        let mut blocked = w.clone();
        blocked.obstacles.push(Obstacle { center: [0.55, 0.0], radius: 0.07 });
        assert_eq!(generate_grasp(&blocked, &qo, &g), Err(SystemError::GraspInfeasible));
    }

    fn grasped_at(w: &WorldParams, qo: Pose2) -> SystemConfig {
        generate_grasp(w, &qo, &GraspSpec::new(PI / 2.0)).unwrap()
    }

    fn command_for(w: &WorldParams, c: &SystemConfig, target: &Pose2) -> ControlInput {
        let tips = carried_fingertips(w, c, target);
        ControlInput { u: ik_near(w, &tips, &c.qa).unwrap() }
    }

    #[test]
    fn free_motion_leaves_object() {
        let w = free_world();
        let c = SystemConfig { qa: [-0.5, 0.3, 0.5, -0.3], qo: Pose2::new(0.6, 0.0, 0.4) };
        assert!(!is_grasped(&w, &c));
        let next = step_dynamics(&w, &c, &ControlInput { u: [-0.45, 0.25, 0.55, -0.2] }).unwrap();
        assert_eq!(next.qo, c.qo);
    }

    #[test]
    fn rigid_translation_and_rotation() {
        let w = free_world();
        let c = grasped_at(&w, Pose2::new(0.5, 0.0, 0.0));
        let t = Pose2::new(0.52, 0.01, 0.0);
        let n = step_dynamics(&w, &c, &command_for(&w, &c, &t)).unwrap();
        assert_abs_diff_eq!(n.qo.x, 0.52, epsilon = 1e-9);
        assert_abs_diff_eq!(n.qo.y, 0.01, epsilon = 1e-9);
        assert_abs_diff_eq!(n.qo.theta, 0.0, epsilon = 1e-9);
        let r = Pose2::new(0.5, 0.0, 0.05);
        let n = step_dynamics(&w, &c, &command_for(&w, &c, &r)).unwrap();
        assert_abs_diff_eq!(n.qo.x, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(n.qo.y, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(n.qo.theta, 0.05, epsilon = 1e-9);
        assert!(is_grasped(&w, &n));
    }

    #[test]
    fn squeezing_is_rejected_and_opening_releases() {
        let w = free_world();
        let c = grasped_at(&w, Pose2::new(0.5, 0.0, 0.0));
        let g = GraspSpec::new(PI / 2.0);
        let [l, r] = g.contacts(&w, &c.qo);
        let squeeze = [[l[0], l[1] - 0.02], [r[0], r[1] + 0.02]];
        let u = ControlInput { u: ik_near(&w, &squeeze, &c.qa).unwrap() };
        assert!(matches!(step_dynamics(&w, &c, &u), Err(SystemError::RigidityViolation { .. })));
        let open = [[l[0], l[1] + 0.02], [r[0], r[1] - 0.02]];
        let u = ControlInput { u: ik_near(&w, &open, &c.qa).unwrap() };
        let n = step_dynamics(&w, &c, &u).unwrap();
        assert_eq!(n.qo, c.qo);
        assert!(!is_grasped(&w, &n));
    }

    #[test]
    fn blocked_step_reports_collision() {
        let mut w = free_world();
        w.obstacles.push(Obstacle { center: [0.72, 0.0], radius: 0.07 });
        let c = grasped_at(&w, Pose2::new(0.5, 0.0, 0.0));
        let t = Pose2::new(0.56, 0.0, 0.0);
        let r = step_dynamics(&w, &c, &command_for(&w, &c, &t));
        assert!(matches!(r, Err(SystemError::CollisionAtStep { .. })), "{r:?}");
    }

    proptest! {
        #[test]
        fn fk_stays_in_reach_disc(j1 in -2.8..2.8f64, j2 in -2.8..2.8f64) {
            let a = WorldParams::default().arms.left;
            let p = forward_kinematics(&a, [j1, j2]).unwrap();
            prop_assert!(norm(sub(p, a.base)) <= a.reach() + 1e-12);
        }

        #[test]
        fn ik_round_trips(r in 0.05..1.09f64, ang in -PI..PI) {
            let a = WorldParams::default().arms.right;
            let t = [a.base[0] + r * ang.cos(), a.base[1] + r * ang.sin()];
            for j in inverse_kinematics(&a, t) {
                let p = forward_kinematics(&a, j).unwrap();
                prop_assert!(norm(sub(p, t)) <= 1e-9);
            }
        }

        #[test]
        fn grasped_steps_keep_grasp_and_reverse(
            x in 0.35..0.7f64, y in -0.3..0.3f64, th in -PI..PI,
            dx in -0.02..0.02f64, dy in -0.02..0.02f64, dth in -0.04..0.04f64,
        ) {
            let w = free_world();
            let qo = Pose2::new(x, y, th);
            let Ok(c) = generate_grasp(&w, &qo, &GraspSpec::new(0.3)) else { return Ok(()); };
            let t = Pose2::new(x + dx, y + dy, th + dth);
            let tips = carried_fingertips(&w, &c, &t);
            let Some(qa) = ik_near(&w, &tips, &c.qa) else { return Ok(()); };
            let Ok(n) = step_dynamics(&w, &c, &ControlInput { u: qa }) else { return Ok(()); };
            prop_assert!(is_grasped(&w, &n));
            prop_assert!(collision_check(&w, &n).iter().all(|(_, d)| *d >= -1e-9));
            let back = step_dynamics(&w, &n, &ControlInput { u: c.qa }).unwrap();
            prop_assert!(crate::se2::distance(&back.qo, &qo) <= 1e-9);
        }

        #[test]
        fn steps_are_deterministic(a in proptest::array::uniform4(-1.0..1.0f64)) {
            let w = WorldParams::default();
            let c = grasped_at(&w, Pose2::new(0.5, 0.0, 0.0));
            let u = ControlInput { u: lerp4(&c.qa, &a, 0.05) };
            prop_assert_eq!(step_dynamics(&w, &c, &u), step_dynamics(&w, &c, &u));
        }
    }

    #[test]
    fn random_free_configs_have_nonnegative_distances() {
        use rand::{Rng, SeedableRng};
        let w = WorldParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut found = 0;
        while found < 200 {
            let qa = std::array::from_fn(|_| rng.gen_range(-2.8..2.8));
            let qo = Pose2::new(rng.gen_range(0.25..0.8), rng.gen_range(-0.55..0.55), rng.gen_range(-PI..PI));
            let c = SystemConfig { qa, qo };
            if first_violation(&w, &c, PairMask::ALL, 0.0).is_none() {
                found += 1;
                assert!(collision_check(&w, &c).iter().all(|(_, d)| *d >= 0.0));
            }
        }
    }
}
