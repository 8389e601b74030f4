use thiserror::Error;

/// Errors raised across the engine.
///
/// Variants are grouped by the failure class the CLI maps onto exit codes:
/// configuration/schema problems, policy or data validation refusals, and
/// numerical failures during fitting.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error for unit {unit}: {message}")]
    Validation { unit: String, message: String },

    #[error("history unavailable for unit {unit} at t={t}: unit censored or failed before t")]
    UnavailableHistory { unit: String, t: usize },

    #[error("exposure domain mismatch: {0}")]
    ExposureDomain(String),

    #[error("policy spec error: {0}")]
    PolicySpec(String),

    #[error("policy requirement violated: {0}")]
    PolicyRequirement(String),

    #[error("rule at t={t} declares no randomizer")]
    NoRandomizer { t: usize },

    #[error("invalid learner spec: {0}")]
    LearnerSpec(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("feature signature mismatch: model trained on {expected:?}, got {found:?}")]
    Signature {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("invalid fold request: {0}")]
    Folds(String),

    #[error("all candidate learners failed to fit: {0}")]
    AllLearnersFailed(String),

    #[error("degenerate classifier at t={t}: {message}")]
    DegenerateClassifier { t: usize, message: String },

    #[error("positivity violation for unit {unit} at t={t}: {message}")]
    Positivity {
        unit: String,
        t: usize,
        message: String,
    },

    #[error("empty risk set at t={0}")]
    EmptyRiskSet(usize),

    #[error("fluctuation did not converge at t={t}: |score| = {score:e} after {iterations} iterations")]
    Fluctuation {
        t: usize,
        score: f64,
        iterations: usize,
    },

    #[error("ratio estimates do not cover time {0}")]
    MissingRatios(usize),

    #[error("bootstrap refused: {0}")]
    BootstrapRefused(String),

    #[error("contrast error: {0}")]
    Contrast(String),

    #[error("invalid horizon: {0}")]
    Horizon(String),

    #[error("improper law: {0}")]
    ImproperLaw(String),

    #[error("unsupported by exact oracle: {0}")]
    OracleUnsupported(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures the CLI reports as numerical (exit code 4).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::AllLearnersFailed(_)
                | Error::DegenerateClassifier { .. }
                | Error::Positivity { .. }
                | Error::EmptyRiskSet(_)
                | Error::Fluctuation { .. }
                | Error::MissingRatios(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
