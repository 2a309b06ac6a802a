pub mod qp;
pub mod se2;
pub mod system;
pub mod planners;
pub mod reach;
pub mod cover;
pub mod graph;
pub mod gcs;
pub mod planner;
pub mod baseline;
pub mod eval;
pub mod config;
pub mod artifact;
pub mod render;
