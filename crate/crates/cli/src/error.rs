use thiserror::Error;

/// CLI failure classes, mapped onto process exit codes:
/// config errors exit 2, dependency errors 3, runtime failures 4.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("prerequisite stage not satisfied: {stage}")]
    Dependency { stage: String },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dependency { .. } => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<osrlab_core::Error> for CliError {
    fn from(e: osrlab_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
