//! Metrics, query sets and batch evaluation of the graph planner, its
//! ablations and the baseline on identical queries.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{contact_rrt, BaselineParams};
use crate::cover::covered;
use crate::graph::{sub_seed, MrsGraph};
use crate::planner::{plan, FullPlan, PlanFailure, Planners, Query};
use crate::se2::{distance, wrap, Pose2};
use crate::system::{SystemConfig, WorldParams};

/// Start-goal distances below this give a travel ratio of 1.
const DEGENERATE_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub task_cost: f64,
    pub travel_ratio: f64,
    pub contact_ratio: f64,
    pub query_time: f64,
    pub success: bool,
}

/// Object path length in the SE(2) metric.
pub fn object_travel(plan: &FullPlan) -> f64 {
    plan.configs().windows(2).map(|c| distance(&c[0].qo, &c[1].qo)).sum()
}

/// Length of the path in full configuration space (joints plus object pose,
/// angles differenced on the circle).
pub fn configuration_travel(configs: &[SystemConfig]) -> f64 {
    configs
        .windows(2)
        .map(|c| {
            let (a, b) = (&c[0], &c[1]);
            let mut s: f64 = (0..4).map(|i| (b.qa[i] - a.qa[i]).powi(2)).sum();
            s += (b.qo.x - a.qo.x).powi(2) + (b.qo.y - a.qo.y).powi(2) + wrap(b.qo.theta - a.qo.theta).powi(2);
            s.sqrt()
        })
        .sum()
}

pub fn compute_metrics(q: &Query, plan: &FullPlan, elapsed: f64) -> Metrics {
    let d = distance(&q.qo_start, &q.qo_goal);
    let travel_ratio = if d <= DEGENERATE_DISTANCE { 1.0 } else { object_travel(plan) / d };
    let len = configuration_travel(&plan.configs());
    let contact_ratio = if len > 0.0 { plan.regrasps() as f64 / len } else { 0.0 };
    Metrics { task_cost: plan.total_cost, travel_ratio, contact_ratio, query_time: elapsed, success: true }
}

/// Uniform pose in the workspace box whose object disc clears every
/// obstacle.
pub fn sample_query_pose(world: &WorldParams, rng: &mut ChaCha8Rng) -> Pose2 {
    let w = &world.workspace;
    loop {
        let p = Pose2::new(rng.gen_range(w.x[0]..w.x[1]), rng.gen_range(w.y[0]..w.y[1]), rng.gen_range(w.theta[0]..w.theta[1]));
        let clear = world
            .obstacles
            .iter()
            .all(|o| (p.x - o.center[0]).hypot(p.y - o.center[1]) > o.radius + world.object_radius);
        if clear {
            return p;
        }
    }
}

pub fn sample_queries(world: &WorldParams, n: usize, seed: u64) -> Vec<Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let qo_start = sample_query_pose(world, &mut rng);
            let qo_goal = sample_query_pose(world, &mut rng);
            Query { qo_start, qo_goal }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grs,
    GrsNoPathSampling,
    GrsNoFittedCosts,
    ContactRrt,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Grs => "grs",
            Method::GrsNoPathSampling => "grs_no_path_sampling",
            Method::GrsNoFittedCosts => "grs_no_fitted_costs",
            Method::ContactRrt => "contact_rrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchParams {
    pub n_queries: usize,
    /// Candidate object paths per query.
    pub k: usize,
    pub ablations: bool,
    pub baseline: bool,
    pub rng_seed: u64,
}

/// Graphs a batch runs on. The heuristic-cost graph is only needed for the
/// fitted-cost ablation.
pub struct BatchGraphs<'a> {
    pub fitted: &'a MrsGraph,
    pub heuristic: Option<&'a MrsGraph>,
}

/// One method on one query. Times are kept out of the CSV so reports are
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub query: usize,
    pub method: Method,
    pub start_x: f64,
    pub start_y: f64,
    pub start_theta: f64,
    pub goal_x: f64,
    pub goal_y: f64,
    pub goal_theta: f64,
    pub covered: bool,
    pub success: bool,
    pub failure: Option<String>,
    pub task_cost: Option<f64>,
    pub travel_ratio: Option<f64>,
    pub contact_ratio: Option<f64>,
    pub regrasps: Option<usize>,
    #[serde(skip)]
    pub query_time: f64,
    /// The returned plan, kept in memory for inspection only.
    #[serde(skip)]
    pub plan: Option<FullPlan>,
}

impl Row {
    fn new(i: usize, method: Method, q: &Query, covered: bool, result: &Result<FullPlan, PlanFailure>, elapsed: f64) -> Self {
        let mut row = Row {
            query: i,
            method,
            start_x: q.qo_start.x,
            start_y: q.qo_start.y,
            start_theta: q.qo_start.theta,
            goal_x: q.qo_goal.x,
            goal_y: q.qo_goal.y,
            goal_theta: q.qo_goal.theta,
            covered,
            success: false,
            failure: None,
            task_cost: None,
            travel_ratio: None,
            contact_ratio: None,
            regrasps: None,
            query_time: elapsed,
            plan: None,
        };
        match result {
            Ok(p) => {
                let m = compute_metrics(q, p, elapsed);
                row.success = true;
                row.task_cost = Some(m.task_cost);
                row.travel_ratio = Some(m.travel_ratio);
                row.contact_ratio = Some(m.contact_ratio);
                row.regrasps = Some(p.regrasps());
                row.plan = Some(p.clone());
            }
            Err(e) => row.failure = Some(e.kind.name().to_string()),
        }
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub queries: usize,
    pub covered: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub success_rate_covered: f64,
    pub mean_task_cost: Option<f64>,
    pub median_task_cost: Option<f64>,
    pub mean_travel_ratio: Option<f64>,
    pub mean_contact_ratio: Option<f64>,
    pub mean_query_time: f64,
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn summarize(rows: &[Row], method: Method) -> Summary {
    let rows: Vec<&Row> = rows.iter().filter(|r| r.method == method).collect();
    let ok: Vec<&&Row> = rows.iter().filter(|r| r.success).collect();
    let covered = rows.iter().filter(|r| r.covered).count();
    let successes_covered = ok.iter().filter(|r| r.covered).count();
    let field = |f: fn(&Row) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
    let costs = field(|r| r.task_cost);
    let times: Vec<f64> = rows.iter().map(|r| r.query_time).collect();
    Summary {
        method,
        queries: rows.len(),
        covered,
        successes: ok.len(),
        success_rate: ratio(ok.len(), rows.len()),
        success_rate_covered: ratio(successes_covered, covered),
        mean_task_cost: mean(&costs),
        median_task_cost: median(&costs),
        mean_travel_ratio: mean(&field(|r| r.travel_ratio)),
        mean_contact_ratio: mean(&field(|r| r.contact_ratio)),
        mean_query_time: mean(&times).unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub methods: Vec<Method>,
    pub rows: Vec<Row>,
    /// Wall-clock seconds per row, in row order.
    pub query_times: Vec<f64>,
    pub summaries: Vec<Summary>,
}

impl Report {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn summary(&self, method: Method) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        if self.rows.is_empty() {
            out.write_record(CSV_HEADER)?;
        }
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<Row>, csv::Error> {
        csv::Reader::from_reader(r).deserialize().collect()
    }
}

pub const CSV_HEADER: [&str; 15] = [
    "query",
    "method",
    "start_x",
    "start_y",
    "start_theta",
    "goal_x",
    "goal_y",
    "goal_theta",
    "covered",
    "success",
    "failure",
    "task_cost",
    "travel_ratio",
    "contact_ratio",
    "regrasps",
];

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64())
}

/// Runs every enabled method on the same query set. Queries run in parallel;
/// rows come back ordered by (query, method).
pub fn batch_eval(world: &WorldParams, planners: &Planners, graphs: &BatchGraphs, params: &BatchParams, baseline: &BaselineParams) -> Report {
    let mut methods = vec![Method::Grs];
    if params.ablations {
        methods.push(Method::GrsNoPathSampling);
        if graphs.heuristic.is_some() {
            methods.push(Method::GrsNoFittedCosts);
        }
    }
    if params.baseline {
        methods.push(Method::ContactRrt);
    }
    let queries = sample_queries(world, params.n_queries, params.rng_seed);
    let rows: Vec<Row> = queries
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, q)| {
            let g = graphs.fitted;
            let is_covered = covered(&g.sets, &q.qo_start) && covered(&g.sets, &q.qo_goal);
            let seed = sub_seed(params.rng_seed, &[i as u64]);
            methods
                .iter()
                .map(|&m| {
                    let (r, t) = timed(|| match m {
                        Method::Grs => plan(world, g, planners, q, params.k, seed),
                        Method::GrsNoPathSampling => plan(world, g, planners, q, 1, seed),
                        Method::GrsNoFittedCosts => plan(world, graphs.heuristic.unwrap(), planners, q, params.k, seed),
                        Method::ContactRrt => {
                            let b = BaselineParams { rng_seed: sub_seed(baseline.rng_seed, &[i as u64]), ..*baseline };
                            contact_rrt(world, planners, q, &b)
                        }
                    });
                    Row::new(i, m, q, is_covered, &r, t)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let summaries = methods.iter().map(|&m| summarize(&rows, m)).collect();
    let query_times = rows.iter().map(|r| r.query_time).collect();
    Report { methods, rows, query_times, summaries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcs::PathSolution;
    use crate::planner::Segment;
    use crate::system::{generate_grasp, GraspSpec};
    use proptest::prelude::*;

    fn straight_plan(world: &WorldParams) -> (Query, FullPlan) {
        let a = generate_grasp(world, &Pose2::new(0.5, 0.0, 0.0), &GraspSpec::new(-2.356194490192345)).unwrap();
        let mut b = a;
        b.qo = Pose2::new(0.6, 0.0, 0.0);
        let configs = vec![a, b];
        let q = Query { qo_start: a.qo, qo_goal: b.qo };
        let plan = FullPlan {
            query: q,
            segments: vec![Segment::Transfer { set: None, configs: configs.clone(), inputs: vec![] }],
            total_cost: 0.0,
            object_path: None::<PathSolution>,
        };
        (q, plan)
    }

    #[test]
    fn single_transfer_metrics() {
        let w = WorldParams::default();
        let (q, p) = straight_plan(&w);
        let m = compute_metrics(&q, &p, 0.5);
        assert!((m.travel_ratio - 1.0).abs() < 1e-12);
        assert_eq!(m.contact_ratio, 0.0);
        assert!(m.success && m.task_cost >= 0.0 && m.query_time == 0.5);
        assert_eq!(compute_metrics(&q, &p, 0.5), m);
    }

    #[test]
    fn degenerate_query_ratio() {
        let w = WorldParams::default();
        let (_, p) = straight_plan(&w);
        let q = Query { qo_start: Pose2::new(0.5, 0.0, 0.0), qo_goal: Pose2::new(0.5, 0.0, 0.0) };
        assert_eq!(compute_metrics(&q, &p, 0.0).travel_ratio, 1.0);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        assert_eq!(mean(&[1.0, 2.0]), Some(1.5));
    }

    #[test]
    fn queries_clear_obstacles() {
        let w = WorldParams::default();
        let qs = sample_queries(&w, 200, 4);
        assert_eq!(qs, sample_queries(&w, 200, 4));
        for q in &qs {
            for p in [q.qo_start, q.qo_goal] {
                assert!(w.workspace.contains(&p));
                for o in &w.obstacles {
                    assert!((p.x - o.center[0]).hypot(p.y - o.center[1]) > o.radius + w.object_radius);
                }
            }
        }
    }

    #[test]
    fn empty_report_has_headers() {
        let g = MrsGraph::from_parts(vec![], vec![], &[]).unwrap();
        let params = BatchParams { n_queries: 0, k: 10, ablations: true, baseline: true, rng_seed: 0 };
        let r = batch_eval(&WorldParams::default(), &Planners::default(), &BatchGraphs { fitted: &g, heuristic: None }, &params, &BaselineParams::default());
        assert!(r.rows.is_empty());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_HEADER.join(","));
        assert_eq!(r.summary(Method::Grs).unwrap().queries, 0);
    }

    fn arb_row() -> impl Strategy<Value = Row> {
        let f = || prop_oneof![Just(None), any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(Some)];
        (0usize..1000, any::<bool>(), prop::array::uniform6(-10.0..10.0f64), f(), f(), f(), prop::option::of(0usize..9)).prop_map(|(i, ok, p, c, t, k, n)| Row {
            query: i,
            method: Method::GrsNoFittedCosts,
            start_x: p[0],
            start_y: p[1],
            start_theta: p[2],
            goal_x: p[3],
            goal_y: p[4],
            goal_theta: p[5],
            covered: !ok,
            success: ok,
            failure: (!ok).then(|| "no_path".to_string()),
            task_cost: c,
            travel_ratio: t,
            contact_ratio: k,
            regrasps: n,
            query_time: 0.0,
            plan: None,
        })
    }

    proptest! {
        #[test]
        fn csv_and_json_round_trip(rows in prop::collection::vec(arb_row(), 0..8)) {
            let report = Report { methods: vec![Method::GrsNoFittedCosts], summaries: vec![summarize(&rows, Method::GrsNoFittedCosts)], query_times: vec![0.0; rows.len()], rows };
            let mut buf = Vec::new();
            report.write_csv(&mut buf).unwrap();
            let back = Report::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &report.rows);
            let json = serde_json::to_string(&report).unwrap();
            let again: Report = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(serde_json::to_string(&again).unwrap(), json);
        }
    }
}
