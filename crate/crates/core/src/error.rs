use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("no exposed atom: support value is {support_value:e}")]
    NoExposedAtom { support_value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bundle is empty")]
    EmptyBundle,

    #[error("level set is empty or projection failed after {iterations} iterations (residual {residual:e}): {reason}")]
    InfeasibleLevelSet {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("restricted recovery problem is infeasible: residual {residual:e} exceeds {target:e}")]
    RecoveryInfeasible { residual: f64, target: f64 },

    #[error("reduced solve stalled after {iterations} iterations (projected gradient norm {residual:e})")]
    ReducedSolveStalled { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(expected: impl Into<String>, got: impl Into<String>) -> Error {
    Error::Shape {
        expected: expected.into(),
        got: got.into(),
    }
}
