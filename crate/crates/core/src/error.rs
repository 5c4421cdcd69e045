use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("singular system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    #[error("degenerate interpolant: {0}")]
    DegenerateInterpolant(String),

    #[error("non-real step coefficient: 1 + eps2*dt^2 = {0} <= 0")]
    NonRealCoefficient(f64),

    #[error("history not ready: need {needed} levels, have {have}")]
    NotReady { needed: usize, have: usize },

    #[error("history spacing mismatch: expected dt = {expected}, got {found}")]
    Spacing { expected: f64, found: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular amplification: 1 - a*lambda vanishes")]
    SingularAmplification,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step failed at t = {t}: {source}")]
    StepFailure {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at_time(self, t: f64) -> Self {
        match self {
            e @ Error::StepFailure { .. } => e,
            e => Error::StepFailure { t, source: Box::new(e) },
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
