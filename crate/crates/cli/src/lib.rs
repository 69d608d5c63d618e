//! The `forge` command-line pipeline: configuration, checkpointed stages,
//! dataset export and evaluation.

pub mod checkpoint;
pub mod config;
mod error;
pub mod eval;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
pub use pipeline::{assign_filter, EnhanceOptions, EnhanceOutcome, ExportReport, Pipeline, StageReport};
