//! Config-driven pipeline around the `atsdf` library: simulate, reconstruct,
//! mesh, visibility, texture, semantic and evaluate stages writing their
//! artifacts and metrics to an output directory.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod run;
pub mod simulate;

pub use config::{PipelineConfig, Preset, StageToggles, ENV_PREFIX};
pub use error::{ErrorReport, PipelineError};
pub use run::{run, RunSummary, STAGES};
