use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spin quantum number {0} is not a non-negative half-integer")]
    InvalidSpin(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not Hermitian (relative residual {0:.3e})")]
    NotHermitian(f64),

    #[error("level index out of range: ({0}, {1}) for dimension {2}")]
    LevelIndex(usize, usize, usize),

    #[error("no transitions found for g group [{lo}, {hi}]")]
    GroupNotFound { lo: f64, hi: f64 },

    #[error("pulse separation {found:.3e} s is below the minimum {min:.3e} s")]
    SpacingViolation { found: f64, min: f64 },

    #[error("invalid pulse sequence: {0}")]
    InvalidSequence(String),

    #[error("unsupported pulse rotation {angle:.6} rad (only multiples of pi/2 are allowed)")]
    UnsupportedPulse { angle: f64 },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("initial value of `{name}` = {value} lies outside [{lower}, {upper}]")]
    BoundViolation {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("fit did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("Jacobian is singular at the optimum; parameter `{0}` is not identifiable")]
    SingularJacobian(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
