use thiserror::Error;

/// Errors surfaced by the fitting pipeline, the generators, and the readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("model {model} does not support weight {weight} on dyad ({i}, {j})")]
    SupportViolation {
        model: String,
        i: usize,
        j: usize,
        weight: f64,
    },

    #[error("model {model} requires edge covariates but the network carries none")]
    MissingCovariates { model: String },

    #[error("unknown model name {0:?}")]
    UnknownModel(String),

    #[error("invalid group count Q={q} for a network with {n} nodes")]
    InvalidGroupCount { q: usize, n: usize },

    #[error("group {group} has {size} member(s) and cannot be split")]
    UnsplittableGroup { group: usize, size: usize },

    #[error("inner GLM did not converge within the iteration cap")]
    GlmNonConvergence {
        best: Box<crate::mstep::MStepOutcome>,
    },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: dyad ({i}, {j}) already seen with a different value")]
    ContradictoryDuplicate { line: usize, i: usize, j: usize },

    #[error("covariates are in use but dyad ({i}, {j}) has no line")]
    MissingDyad { i: usize, j: usize },

    #[error("fits are not comparable: {0}")]
    Incomparable(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
