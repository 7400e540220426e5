use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("numeric failure in {context}: {message}")]
    Numeric { context: String, message: String },

    #[error("cannot access {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{context}: {source}")]
    Library { context: String, source: distmarch::Error },

    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl std::fmt::Display) -> Self {
        CliError::Config { path: path.into(), message: message.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numeric { .. } => 3,
            CliError::Io { .. } => 1,
            CliError::Library { .. } => 1,
            CliError::ChecksFailed(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attach context to library errors, routing them to the matching exit code.
pub trait Context<T> {
    fn context(self, context: &str) -> CliResult<T>;
}

impl<T> Context<T> for distmarch::Result<T> {
    fn context(self, context: &str) -> CliResult<T> {
        self.map_err(|e| classify(context, e))
    }
}

fn classify(context: &str, e: distmarch::Error) -> CliError {
    use distmarch::Error as E;
    match e {
        E::Config(m) => CliError::config(context, m),
        E::Numeric { .. } | E::NonFiniteState { .. } | E::NonFiniteLoss { .. } | E::DegeneratePosterior => {
            CliError::Numeric { context: context.to_string(), message: e.to_string() }
        }
        other => CliError::Library { context: context.to_string(), source: other },
    }
}
