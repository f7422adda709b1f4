use std::path::PathBuf;

use regretctl_core::Error as CoreError;

/// Command failure; each variant maps to one process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The requested level admits no causal controller.
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Input(_) | CliError::Io { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Attach the stage name to a core error.
    pub fn at(stage: &str, e: CoreError) -> Self {
        match e {
            CoreError::Structure(_) | CoreError::Input(_) => CliError::Input(format!("{stage}: {e}")),
            CoreError::NotPositiveDefinite { .. } | CoreError::Numerical(_) => {
                CliError::Numerical(format!("{stage}: {e}"))
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
