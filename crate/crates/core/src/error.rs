use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("code size {code_size} must be smaller than the input dimension {input_dim}")]
    UndercompleteViolation { code_size: usize, input_dim: usize },
    #[error("standardization regime mismatch: gate uses `{expected}`, got `{found}`")]
    StatsRegime { expected: String, found: String },
    #[error("gate ensemble is empty")]
    EmptyEnsemble,
    #[error("own-gate reconstruction error {0} is too small; relatedness is undefined")]
    DegenerateErrorBase(f64),
    #[error("expert has no head for task `{0}`")]
    UnknownHead(String),
    #[error("task `{0}` is already registered")]
    DuplicateTask(String),
    #[error("registry holds no tasks")]
    EmptyRegistry,
    #[error("expert store: {0}")]
    Store(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
