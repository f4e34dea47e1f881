use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad scenario file, bad expression or bad flag combination.
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// A computation on a valid scenario broke down.
    #[error(transparent)]
    Numerical(jetflow::Error),
    #[error("{} check(s) failed: {}", .0.len(), .0.join(", "))]
    ChecksFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) => 2,
            CliError::ChecksFailed(_) => 3,
        }
    }

    /// Errors raised while building objects from the scenario are the user's
    /// to fix, so they count as validation failures.
    pub fn invalid(context: &str, e: jetflow::Error) -> Self {
        CliError::Invalid(format!("{context}: {e}"))
    }
}

impl From<jetflow::Error> for CliError {
    fn from(e: jetflow::Error) -> Self {
        CliError::Numerical(e)
    }
}
