use thiserror::Error;

/// Errors produced by the numerical kernels, simulators and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, found {found}")]
    Shape {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max |m_ij - m_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("{op} did not converge within {iterations} iterations")]
    NoConvergence { op: &'static str, iterations: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("non-finite cost at timestep {step}")]
    NonFiniteCost { step: usize },

    #[error("state blew up at timestep {step} ({completed} states computed)")]
    Diverged { step: usize, completed: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("controller kind {found} not supported here (expected {expected})")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("every batch in epoch {epoch} diverged")]
    TrainingDiverged { epoch: usize },

    #[error("training exceeded its wall-clock budget of {seconds} s")]
    Timeout { seconds: f64 },

    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    CheckpointVersion { expected: String, found: String },

    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint schema violation: {0}")]
    CheckpointSchema(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for failures that reflect a diverging closed loop rather than
    /// a programming or input error.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::NonFiniteCost { .. } | Error::NonFinite { .. }
        )
    }
}
