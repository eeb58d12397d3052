//! Library surface of the `osrlab` pipeline CLI: config parsing and
//! validation, the stage runner with manifest-backed caching, and report
//! emission. The binary is a thin wrapper over these.

pub mod config;
pub mod dataset_io;
pub mod error;
pub mod manifest;
pub mod report;
pub mod stages;

pub use config::{validate_config, PipelineConfig};
pub use error::CliError;
pub use stages::{run_pipeline, run_stage, Stage, StageRun, StageStatus, ALL_STAGES};
