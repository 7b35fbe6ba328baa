use fredholm_core::Error as CoreError;

/// Errors surfaced by the CLI, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(format!("json: {e}"))
    }
}

impl CliError {
    /// 0 ok, 2 config, 3 contractivity, 4 budget, 5 numerical, 1 other.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidInput(_) | CoreError::UnsupportedDerivative | CoreError::OracleInfeasible(_) => 2,
                CoreError::Contractivity { .. } => 3,
                CoreError::Budget { .. } => 4,
                CoreError::NotPsd { .. }
                | CoreError::BandTooWide { .. }
                | CoreError::Divergent(_)
                | CoreError::NonFinite { .. }
                | CoreError::Degenerate(_)
                | CoreError::TooFewExceedances { .. } => 5,
                CoreError::CostExceeded { .. } => 1,
            },
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}
