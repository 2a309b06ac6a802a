//! On-disk graph artifact. Floats are written in shortest round-trip form,
//! so load followed by save reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CostMode, EdgeCostModel, MrsGraph, VertexCostModel};
use crate::reach::ConvexMRS;
use crate::system::WorldParams;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot access {0}: {1}")]
    Io(String, std::io::Error),
    #[error("malformed graph artifact: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("unsupported artifact version {0}")]
    Version(u32),
    #[error("inconsistent graph artifact: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexRecord {
    pub id: usize,
    #[serde(rename = "A")]
    pub a: [[f64; 6]; 6],
    pub b: [f64; 6],
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub from: usize,
    pub to: usize,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngSeeds {
    pub cover: u64,
    pub graph: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub coverage_history: Vec<f64>,
    pub rng_seeds: RngSeeds,
    pub cost_mode: Option<CostMode>,
}

/// A cover (sets only) or a full graph (sets, vertex costs and edges).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphArtifact {
    pub version: u32,
    pub world: WorldParams,
    pub sets: Vec<ConvexMRS>,
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
    pub meta: Meta,
}

impl GraphArtifact {
    pub fn from_cover(world: &WorldParams, sets: Vec<ConvexMRS>, coverage_history: Vec<f64>, cover_seed: u64) -> Self {
        GraphArtifact {
            version: ARTIFACT_VERSION,
            world: world.clone(),
            sets,
            vertices: vec![],
            edges: vec![],
            meta: Meta { coverage_history, rng_seeds: RngSeeds { cover: cover_seed, graph: None }, cost_mode: None },
        }
    }

    /// Replaces vertices and edges with those of `g`, built on this
    /// artifact's sets.
    pub fn set_graph(&mut self, g: &MrsGraph, cost_mode: CostMode, graph_seed: u64) {
        self.vertices = g
            .vertex_costs
            .iter()
            .enumerate()
            .map(|(id, v)| VertexRecord { id, a: v.a, b: v.b, c: v.c })
            .collect();
        self.edges = g.edges.iter().map(|e| EdgeRecord { from: e.from, to: e.to, k: e.cost.k }).collect();
        self.meta.rng_seeds.graph = Some(graph_seed);
        self.meta.cost_mode = Some(cost_mode);
    }

    pub fn has_graph(&self) -> bool {
        !self.sets.is_empty() && self.vertices.len() == self.sets.len()
    }

    /// Rebuilds the planning graph; angle shifts along edges are recomputed
    /// from the polytopes.
    pub fn graph(&self) -> Result<MrsGraph, ArtifactError> {
        if !self.has_graph() {
            return Err(ArtifactError::Inconsistent("artifact holds a cover without vertex costs".into()));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if v.id != i || self.sets[i].id != i {
                return Err(ArtifactError::Inconsistent(format!("vertex {i} is out of order")));
            }
        }
        let costs = self.vertices.iter().map(|v| VertexCostModel { a: v.a, b: v.b, c: v.c }).collect();
        let edges: Vec<_> = self.edges.iter().map(|e| (e.from, e.to, EdgeCostModel { k: e.k })).collect();
        MrsGraph::from_parts(self.sets.clone(), costs, &edges).map_err(|e| ArtifactError::Inconsistent(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("artifact serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ArtifactError> {
        let a: GraphArtifact = serde_json::from_str(s)?;
        if a.version != ARTIFACT_VERSION {
            return Err(ArtifactError::Version(a.version));
        }
        Ok(a)
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let s = std::fs::read_to_string(path).map_err(|e| ArtifactError::Io(path.display().to_string(), e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        std::fs::write(path, self.to_json()).map_err(|e| ArtifactError::Io(path.display().to_string(), e))
    }
}
