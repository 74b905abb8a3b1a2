use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node {0} has zero degree (isolated nodes must carry a self-loop)")]
    ZeroDegreeNode(usize),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("eigendecomposition did not converge within {iterations} iterations (off-diagonal residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("scale {scale} overflows: exp(s * lambda_max) is not finite")]
    ScaleOverflow { scale: f64 },

    #[error("spectrum bound {bound} is below the estimated largest eigenvalue {estimate}")]
    SpectrumBoundViolation { bound: f64, estimate: f64 },

    #[error("degenerate spectrum: no eigenvalue above {tolerance:e}")]
    DegenerateSpectrum { tolerance: f64 },

    #[error("image {height}x{width} is not divisible by patch size {patch}")]
    NotDivisible {
        height: usize,
        width: usize,
        patch: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inconsistent dataset: {0}")]
    InconsistentDataset(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("class {class} has {count} samples; at least 2 are required to split")]
    ClassTooSmall { class: usize, count: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
