use kramers_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Process exit codes, one per error category.
pub mod exit {
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const INVALID_INPUT: i32 = 4;
    pub const PHYSICS: i32 = 5;
    pub const NUMERICAL: i32 = 6;
    pub const IO: i32 = 7;
    pub const PARSE: i32 = 8;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Usage(_) => exit::USAGE,
            CliError::Io(_) | CliError::Json(_) => exit::IO,
            CliError::Csv(_) => exit::PARSE,
            CliError::Core(e) => match e {
                CoreError::InvalidSpin(_)
                | CoreError::InvalidParameter { .. }
                | CoreError::NotHermitian(_)
                | CoreError::LevelIndex(..)
                | CoreError::InvalidSequence(_)
                | CoreError::UnsupportedPulse { .. }
                | CoreError::SpacingViolation { .. }
                | CoreError::InvalidTrace(_)
                | CoreError::BoundViolation { .. } => exit::INVALID_INPUT,
                CoreError::GroupNotFound { .. } | CoreError::Infeasible(_) => exit::PHYSICS,
                CoreError::NoConvergence { .. } | CoreError::SingularJacobian(_) => exit::NUMERICAL,
                CoreError::Io(_) => exit::IO,
                CoreError::Csv(_) | CoreError::Parse { .. } => exit::PARSE,
            },
        }
    }
}
