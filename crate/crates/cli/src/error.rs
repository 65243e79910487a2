use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(String),

    /// A later stage ran without the cached output of an earlier one.
    #[error("missing stage '{stage}': {detail}; run `neurofield {stage}` first")]
    MissingStage { stage: &'static str, detail: String },

    #[error(transparent)]
    Model(#[from] neurofield::Error),
}

impl CliError {
    /// Process exit status: 2 for an infeasible model, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Model(neurofield::Error::InfeasibleModel { .. }) => 2,
            _ => 1,
        }
    }

    /// The inner message without the category prefix.
    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Usage(m) | CliError::Io(m) => m.clone(),
            other => other.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
