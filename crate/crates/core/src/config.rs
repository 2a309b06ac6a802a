//! Experiment configuration: one JSON document with every parameter and
//! every RNG seed spelled out.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::BaselineParams;
use crate::cover::CoverParams;
use crate::eval::BatchParams;
use crate::graph::GraphParams;
use crate::planner::Planners;
use crate::planners::{TransferParams, TransitParams};
use crate::system::WorldParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("invalid config: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldParams,
    pub transfer: TransferParams,
    pub transit: TransitParams,
    pub cover: CoverParams,
    pub graph: GraphParams,
    pub batch: BatchParams,
    pub baseline: BaselineParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldParams::default(),
            transfer: TransferParams::default(),
            transit: TransitParams { rng_seed: 1, ..Default::default() },
            cover: CoverParams { rng_seed: 2, ..Default::default() },
            graph: GraphParams { rng_seed: 3, ..Default::default() },
            batch: BatchParams { n_queries: 50, k: 10, ablations: true, baseline: true, rng_seed: 4 },
            baseline: BaselineParams { rng_seed: 5, ..Default::default() },
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let c: ExperimentConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        Self::from_json(&s)
    }

    pub fn planners(&self) -> Planners {
        Planners { transfer: self.transfer, transit: self.transit }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.world.validate().map_err(|e| bad(&e))?;
        self.cover.validate().map_err(|e| bad(&e))?;
        self.baseline.validate().map_err(|e| bad(&e))?;
        let t = &self.transfer;
        if t.horizon == 0 || t.n_references == 0 || !(t.eta > 0.0) || !(t.reach_tol > 0.0) {
            return Err(ConfigError::Invalid("transfer parameters must be positive".into()));
        }
        let p = &self.transit;
        if p.max_rrt_iters == 0 || !(p.step_size > 0.0) || !(p.eps >= 0.0) {
            return Err(ConfigError::Invalid("transit parameters must be positive".into()));
        }
        if self.graph.vertex_samples < 10 || self.graph.edge_samples == 0 {
            return Err(ConfigError::Invalid("graph needs at least 10 vertex samples and 1 edge sample".into()));
        }
        if self.batch.k == 0 {
            return Err(ConfigError::Invalid("batch.k must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        let s = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&s).unwrap(), c);
    }

    #[test]
    fn shipped_config_matches_defaults() {
        let shipped = ExperimentConfig::from_json(include_str!("../../../configs/default.json")).unwrap();
        assert_eq!(shipped, ExperimentConfig::default());
    }

    #[test]
    fn missing_seed_is_rejected() {
        let mut v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        v["baseline"].as_object_mut().unwrap().remove("rng_seed");
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(ConfigError::Schema(_))));
    }

    #[test]
    fn unknown_and_invalid_fields() {
        let mut v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        v["extra"] = 1.into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut c = ExperimentConfig::default();
        c.world.object_radius = -1.0;
        assert!(matches!(ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()), Err(ConfigError::Invalid(_))));
        c = ExperimentConfig::default();
        c.batch.k = 0;
        assert!(c.validate().is_err());
    }
}
