//! Batch runner for the relaxation solvers: configuration, output files,
//! checkpoints and parameter sweeps behind the `varembed` binary.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod run;
pub mod sweep;

pub use config::{Model, PartialConfig, RunConfig, SolverKind};
pub use error::{CliError, CliResult};
pub use run::{run, ResultRecord};
pub use sweep::{sweep, SweepParam, SweepRow};

/// JSON schema of `result.json`.
pub const RESULT_SCHEMA: &str = include_str!("../result.schema.json");
