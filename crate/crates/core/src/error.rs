use thiserror::Error;

/// Errors raised by grid construction, the kinetic solver and the diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported dimension {0}: only 1 and 2 are supported")]
    UnsupportedDimension(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected} entries, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("no stability mechanism is active (zero velocities, E = 0 and kappa = 0); use a fixed time step")]
    DegenerateTimeStep,

    #[error("non-finite value at step {step} (cell {cell}, node {node})")]
    NonFinite { step: u64, cell: usize, node: usize },

    #[error("negative density {value:e} at step {step} (cell {cell}, node {node}); max density {max:e}")]
    Negativity {
        step: u64,
        cell: usize,
        node: usize,
        value: f64,
        max: f64,
    },

    #[error("region is empty")]
    EmptyRegion,

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
