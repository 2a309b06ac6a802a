use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use grs_core::artifact::{ArtifactError, GraphArtifact};
use grs_core::config::{ConfigError, ExperimentConfig};
use grs_core::cover::build_cover;
use grs_core::eval::{batch_eval, BatchGraphs, BatchParams};
use grs_core::graph::{build_graph, CostMode, GraphParams};
use grs_core::planner::{plan, FullPlan, Planners, Query};
use grs_core::render::render_plan;
use grs_core::se2::Pose2;
use grs_core::system::WorldParams;

#[derive(Parser)]
#[command(name = "grs", about = "Regrasp planning over graphs of mutually reachable sets")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build an approximate cover and write it as a graph artifact without costs.
    BuildCover {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add vertex and edge costs to a cover artifact.
    BuildGraph {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cover: PathBuf,
        #[arg(long, default_value = "fitted")]
        cost_mode: CostMode,
        /// Output path; defaults to overwriting the cover artifact.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan a single query.
    Plan {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        start: Pose2,
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        goal: Pose2,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional experiment config supplying planner parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        emit_object_path: Option<PathBuf>,
        #[arg(long)]
        render: Option<PathBuf>,
    },
    /// Evaluate the planner, its ablations and the baseline on random queries.
    Batch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        /// CSV report; a JSON report with summaries is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a saved plan as SVG.
    Render {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A plan together with the world it was made in.
#[derive(Serialize, Deserialize)]
struct PlanFile {
    version: u32,
    world: WorldParams,
    plan: FullPlan,
}

fn parse_pose(s: &str) -> Result<Pose2, String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v.as_slice() {
        [x, y, th] => Pose2::try_new(*x, *y, *th).map_err(|e| e.to_string()),
        _ => Err("expected x,y,theta".into()),
    }
}

enum Failure {
    Planning(String),
    Config(String),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(..) => Failure::Other(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<ArtifactError> for Failure {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Io(..) => Failure::Other(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Other(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::BuildCover { config, out } => {
            let c = ExperimentConfig::load(&config)?;
            let cover = build_cover(&c.world, &c.cover, &c.transfer);
            println!("{} sets, coverage {:.3}", cover.sets.len(), cover.coverage());
            GraphArtifact::from_cover(&c.world, cover.sets, cover.coverage_history, c.cover.rng_seed).save(&out)?;
        }
        Cmd::BuildGraph { config, cover, cost_mode, out } => {
            let c = ExperimentConfig::load(&config)?;
            let mut art = GraphArtifact::load(&cover)?;
            if art.world != c.world {
                return Err(Failure::Config("cover was built for a different world".into()));
            }
            let params = GraphParams { cost_mode, ..c.graph };
            let g = build_graph(&c.world, &art.sets, &params, &c.transfer, &c.transit).map_err(|e| Failure::Config(e.to_string()))?;
            println!("{} vertices, {} edges", g.num_vertices(), g.edges.len());
            art.set_graph(&g, cost_mode, params.rng_seed);
            art.save(out.as_deref().unwrap_or(&cover))?;
        }
        Cmd::Plan { graph, start, goal, k, seed, config, out, emit_object_path, render } => {
            let art = GraphArtifact::load(&graph)?;
            let planners = match config {
                Some(p) => ExperimentConfig::load(&p)?.planners(),
                None => Planners::default(),
            };
            let g = art.graph()?;
            let q = Query { qo_start: start, qo_goal: goal };
            let p = plan(&art.world, &g, &planners, &q, k, seed).map_err(|e| Failure::Planning(e.to_string()))?;
            println!("cost {:.6}, {} segments, {} regrasps", p.total_cost, p.segments.len(), p.regrasps());
            if let Some(path) = emit_object_path {
                write(&path, &to_json(&p.object_path))?;
            }
            if let Some(path) = render {
                write(&path, &render_plan(&art.world, Some(&p)))?;
            }
            if let Some(path) = out {
                write(&path, &to_json(&PlanFile { version: 1, world: art.world.clone(), plan: p }))?;
            }
        }
        Cmd::Batch { config, graph, n, out } => {
            let c = ExperimentConfig::load(&config)?;
            let art = GraphArtifact::load(&graph)?;
            if art.world != c.world {
                return Err(Failure::Config("graph was built for a different world".into()));
            }
            let g = art.graph()?;
            let heuristic = match (c.batch.ablations, art.meta.cost_mode) {
                (true, Some(CostMode::Fitted)) => {
                    let params = GraphParams { cost_mode: CostMode::Heuristic, ..c.graph };
                    Some(build_graph(&c.world, &art.sets, &params, &c.transfer, &c.transit).map_err(|e| Failure::Config(e.to_string()))?)
                }
                _ => None,
            };
            let params = BatchParams { n_queries: n.unwrap_or(c.batch.n_queries), ..c.batch };
            let report = batch_eval(&c.world, &c.planners(), &BatchGraphs { fitted: &g, heuristic: heuristic.as_ref() }, &params, &c.baseline);
            let mut csv = Vec::new();
            report.write_csv(&mut csv).map_err(|e| Failure::Other(e.to_string()))?;
            write(&out, &String::from_utf8(csv).expect("csv is utf-8"))?;
            write(&out.with_extension("json"), &to_json(&report))?;
            for s in &report.summaries {
                println!(
                    "{:<22} success {:>3}/{:<3} covered-success {:.3} median cost {}",
                    s.method.name(),
                    s.successes,
                    s.queries,
                    s.success_rate_covered,
                    s.median_task_cost.map_or("-".into(), |v| format!("{v:.3}"))
                );
            }
        }
        Cmd::Render { plan, out } => {
            let s = std::fs::read_to_string(&plan).map_err(|e| Failure::Other(format!("cannot read {}: {e}", plan.display())))?;
            let f: PlanFile = serde_json::from_str(&s).map_err(|e| Failure::Config(format!("malformed plan file: {e}")))?;
            write(&out, &render_plan(&f.world, Some(&f.plan)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Planning(m)) => {
            eprintln!("planning failed: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Config(m)) => {
            eprintln!("{m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
    }
}
