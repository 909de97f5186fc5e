use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Rejected before any computation; exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Failure while running; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<grasscap::Error> for CliError {
    fn from(e: grasscap::Error) -> Self {
        use grasscap::Error as E;
        match e {
            E::Domain { .. } | E::InvalidDimension(_) | E::DimensionMismatch { .. } => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}
