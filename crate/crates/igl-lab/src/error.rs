//! Error taxonomy shared by the whole crate.

use thiserror::Error;

/// Everything that can go wrong across ingestion, simulation, learning, and
/// the exact oracles.
#[derive(Debug, Error)]
pub enum IglError {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A per-action data bucket is too small (or importance weights sum to
    /// zero) to estimate anything for that action.
    #[error("insufficient data for action {action}: {details}")]
    InsufficientData { action: usize, details: String },

    #[error("optimization diverged at epoch {epoch}: {details}")]
    OptimizationDiverged { epoch: usize, details: String },

    /// Conditioning on a zero-probability (action, reward) event.
    #[error("degenerate conditioning: Pr(r = {reward} | a = {action}) = 0")]
    DegenerateConditioning { action: usize, reward: u8 },

    #[error("grid search budget exceeded: {required} evaluations required, budget {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("environment construction: {0}")]
    EnvConstruction(String),

    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
