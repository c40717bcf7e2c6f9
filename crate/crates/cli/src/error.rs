//! Errors surfaced by the runner, each mapped to a process exit code.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Divergence(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(varembed_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Io { .. } | CliError::Solver(_) => 1,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.as_ref().display().to_string();
        move |source| CliError::Io { path, source }
    }
}

impl From<varembed_core::Error> for CliError {
    fn from(e: varembed_core::Error) -> Self {
        use varembed_core::Error as E;
        match e {
            E::InvalidConfig(msg) => CliError::Config(msg),
            E::OracleTooLarge { dim, cap } => CliError::Config(format!(
                "oracle dimension {dim} exceeds the cap {cap}; drop --oracle for this size"
            )),
            E::Divergence { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
