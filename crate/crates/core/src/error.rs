use thiserror::Error;

/// Errors raised by the testing and spatial routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("empty envelope index set for alpha = {alpha} (critical rank {critical_rank})")]
    EmptyEnvelope { alpha: f64, critical_rank: f64 },

    #[error("mismatched number of simulations: part `{part}` has {found}, expected {expected}")]
    MismatchedSimulations { part: String, expected: usize, found: usize },

    #[error("mismatched grid length: part `{part}` has K = {found}, expected {expected}")]
    MismatchedGrid { part: String, expected: usize, found: usize },

    #[error("too few points of type {mark}: need {needed}, found {found}")]
    TooFewPoints { mark: u32, needed: usize, found: usize },

    #[error("dart throwing gave up after {attempts} attempts with {placed} of {target} points placed")]
    PackingFailed { attempts: u64, placed: usize, target: usize },

    #[error("minimum contrast fit did not converge (best objective {objective:.6e} at kappa = {kappa:.4}, R = {radius:.5})")]
    FitFailed { objective: f64, kappa: f64, radius: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
