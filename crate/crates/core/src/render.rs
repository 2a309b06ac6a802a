//! Top-down SVG of a world and, optionally, a plan.

use std::fmt::Write;

use crate::planner::FullPlan;
use crate::se2::Pose2;
use crate::system::{arm_points, SystemConfig, WorldParams};

const PX_PER_M: f64 = 400.0;
const MARGIN: f64 = 20.0;
const TRANSFER_COLOR: &str = "#1f77b4";
const TRANSIT_COLOR: &str = "#ff7f0e";

struct Frame {
    x0: f64,
    y1: f64,
    width: f64,
    height: f64,
}

impl Frame {
    /// Fits the workspace box and both arm reach discs.
    fn new(world: &WorldParams) -> Self {
        let w = &world.workspace;
        let (mut x0, mut x1, mut y0, mut y1) = (w.x[0], w.x[1], w.y[0], w.y[1]);
        for arm in [&world.arms.left, &world.arms.right] {
            let r = arm.reach();
            x0 = x0.min(arm.base[0] - 0.1);
            x1 = x1.max(arm.base[0] + r * 0.5);
            y0 = y0.min(arm.base[1] - 0.1);
            y1 = y1.max(arm.base[1] + 0.1);
        }
        Frame { x0, y1, width: (x1 - x0) * PX_PER_M + 2.0 * MARGIN, height: (y1 - y0) * PX_PER_M + 2.0 * MARGIN }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        (MARGIN + (p[0] - self.x0) * PX_PER_M, MARGIN + (self.y1 - p[1]) * PX_PER_M)
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[[f64; 2]], color: &str, width: f64) {
    let coords: Vec<String> = pts.iter().map(|p| f.px(*p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#, coords.join(" "));
}

fn circle(out: &mut String, f: &Frame, c: [f64; 2], r: f64, style: &str) {
    let (x, y) = f.px(c);
    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" {style}/>"#, r * PX_PER_M);
}

fn object(out: &mut String, f: &Frame, world: &WorldParams, q: &Pose2, color: &str) {
    circle(out, f, [q.x, q.y], world.object_radius, &format!(r#"fill="none" stroke="{color}" stroke-width="2""#));
    let tip = [q.x + world.object_radius * q.theta.cos(), q.y + world.object_radius * q.theta.sin()];
    polyline(out, f, &[[q.x, q.y], tip], color, 2.0);
}

fn arms(out: &mut String, f: &Frame, world: &WorldParams, c: &SystemConfig, color: &str) {
    let pts = arm_points(world, &c.qa);
    for (arm, (elbow, tip)) in [&world.arms.left, &world.arms.right].iter().zip(pts) {
        polyline(out, f, &[arm.base, elbow, tip], color, 3.0);
        circle(out, f, tip, 0.01, &format!(r#"fill="{color}""#));
    }
}

/// Workspace, obstacles and, for a plan, the arms at start and end, the
/// object path colored by segment type (transits trace the fingertips, as
/// the object rests) and the goal disc of radius `goal_tol`.
pub fn render_plan(world: &WorldParams, plan: Option<&FullPlan>) -> String {
    let f = Frame::new(world);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        f.width, f.height, f.width, f.height
    );
    let w = &world.workspace;
    let (x, y) = f.px([w.x[0], w.y[1]]);
    let _ = writeln!(
        out,
        r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#f7f7f7" stroke="#999"/>"##,
        (w.x[1] - w.x[0]) * PX_PER_M,
        (w.y[1] - w.y[0]) * PX_PER_M
    );
    for o in &world.obstacles {
        circle(&mut out, &f, o.center, o.radius, r##"fill="#555""##);
    }
    if let Some(p) = plan {
        let goal = p.query.qo_goal;
        circle(&mut out, &f, [goal.x, goal.y], world.goal_tol, r##"fill="#2ca02c" fill-opacity="0.2" stroke="#2ca02c""##);
        for s in &p.segments {
            if s.is_transit() {
                for arm in 0..2 {
                    let tips: Vec<[f64; 2]> = s.configs().iter().map(|c| arm_points(world, &c.qa)[arm].1).collect();
                    polyline(&mut out, &f, &tips, TRANSIT_COLOR, 1.5);
                }
            } else {
                let pts: Vec<[f64; 2]> = s.configs().iter().map(|c| [c.qo.x, c.qo.y]).collect();
                polyline(&mut out, &f, &pts, TRANSFER_COLOR, 2.5);
            }
        }
        let configs = p.configs();
        let (first, last) = (configs[0], *configs.last().unwrap());
        arms(&mut out, &f, world, &first, "#888");
        arms(&mut out, &f, world, &last, "#333");
        object(&mut out, &f, world, &first.qo, "#d62728");
        object(&mut out, &f, world, &last.qo, "#2ca02c");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{Query, Segment};
    use crate::system::{generate_grasp, GraspSpec};

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).unwrap()
    }

    #[test]
    fn empty_plan_shows_world_only() {
        let w = WorldParams::default();
        let svg = render_plan(&w, None);
        let doc = parse(&svg);
        let circles = doc.descendants().filter(|n| n.has_tag_name("circle")).count();
        assert_eq!(circles, w.obstacles.len());
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 0);
    }

    #[test]
    fn single_transfer_is_one_colored_polyline() {
        let w = WorldParams::default();
        let a = generate_grasp(&w, &Pose2::new(0.5, 0.0, 0.0), &GraspSpec::new(-2.356194490192345)).unwrap();
        let mut b = a;
        b.qo = Pose2::new(0.6, 0.1, 0.0);
        let plan = FullPlan {
            query: Query { qo_start: a.qo, qo_goal: b.qo },
            segments: vec![Segment::Transfer { set: None, configs: vec![a, b], inputs: vec![] }],
            total_cost: 0.0,
            object_path: None,
        };
        let svg = render_plan(&w, Some(&plan));
        let doc = parse(&svg);
        let path_lines: Vec<_> = doc
            .descendants()
            .filter(|n| n.has_tag_name("polyline") && n.attribute("stroke") == Some(TRANSFER_COLOR))
            .collect();
        assert_eq!(path_lines.len(), 1);
        assert!(!svg.contains(TRANSIT_COLOR));
    }
}
