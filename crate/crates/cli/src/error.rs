use std::process::ExitCode;

/// A failure classified by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Parse(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Internal(_) => 5,
        })
    }

    /// Classifies an error raised while reading an input file: a missing file is a
    /// configuration problem, a malformed one a parse problem.
    pub fn input(e: bias_audit::Error) -> Self {
        use bias_audit::Error as E;
        match e {
            E::Io { .. } | E::Domain(_) => CliError::Config(e.to_string()),
            E::Parse { .. } | E::Validation { .. } => CliError::Parse(e.to_string()),
            E::Backend(b) => CliError::Backend(b.to_string()),
        }
    }
}

/// Errors from processing and writing outputs.
impl From<bias_audit::Error> for CliError {
    fn from(e: bias_audit::Error) -> Self {
        use bias_audit::Error as E;
        match e {
            E::Backend(b) => CliError::Backend(b.to_string()),
            E::Validation { .. } => CliError::Parse(e.to_string()),
            E::Domain(_) => CliError::Config(e.to_string()),
            E::Io { .. } | E::Parse { .. } => CliError::Internal(e.to_string()),
        }
    }
}

impl From<bias_audit::backend::BackendError> for CliError {
    fn from(e: bias_audit::backend::BackendError) -> Self {
        CliError::Backend(e.to_string())
    }
}
