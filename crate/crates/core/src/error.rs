use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing value at row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },

    #[error("invalid value at row {row}, column `{column}`: {message}")]
    InvalidValue {
        row: usize,
        column: String,
        message: String,
    },

    #[error("column alignment error: {0}")]
    Alignment(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "reference calibration did not converge after {iterations} iterations \
         (achieved c-statistic {achieved_cstat:.5}, prevalence {achieved_prevalence:.5})"
    )]
    CalibrationNonConvergence {
        iterations: usize,
        achieved_cstat: f64,
        achieved_prevalence: f64,
    },

    #[error("target c-statistic {target} is unreachable (largest achievable {achievable:.5})")]
    UnreachableTarget { target: f64, achievable: f64 },

    #[error("degenerate outcome: {0}")]
    DegenerateOutcome(String),

    #[error("undefined concordance: outcomes contain a single class")]
    UndefinedConcordance,

    #[error("degenerate recalibration: estimated risks are constant")]
    DegenerateRecalibration,

    #[error("model fit did not converge: {0}")]
    NonConvergence(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("rank-deficient design: dependent columns {0:?}")]
    RankDeficient(Vec<String>),

    #[error("matrix is not positive definite{0}")]
    NotPositiveDefinite(String),

    #[error("unknown subgroup label `{0}`")]
    UnknownSubgroup(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
