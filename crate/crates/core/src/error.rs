use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point cloud")]
    EmptyCloud,

    #[error("block has {0} point(s); at least 2 are required")]
    DegenerateBlock(usize),


    #[error("spatial index is empty")]
    EmptyIndex,

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("filter basis mismatch: expected {expected}, got {got}")]
    BasisMismatch { expected: &'static str, got: &'static str },

    #[error("lambda_max must be positive, got {0}")]
    InvalidLambdaMax(f64),

    #[error("dropout rate must lie in [0, 1), got {0}")]
    InvalidDropoutRate(f64),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("label count mismatch: {labels} labels vs {points} points")]
    LabelCountMismatch { labels: usize, points: usize },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("degenerate primitive: {0}")]
    DegeneratePrimitive(String),

    #[error("no usable blocks: every grid cell holds fewer than 2 points")]
    NoBlocks,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("label set mismatch: model expects {model} classes, data has {data}")]
    LabelSetMismatch { model: usize, data: usize },

    #[error("matrix too large for dense eigendecomposition: n = {0} (max 64)")]
    TooLargeForDense(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
