use thiserror::Error;

/// Errors produced by the SVDD toolkit.
#[derive(Debug, Error)]
pub enum SvddError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("unsupported operation: {0}")]
    UnsupportedOperation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The SMO loop hit its iteration cap. The best iterate is kept so callers
    /// can inspect or resume from it.
    #[error("solver did not converge after {iterations} iterations (KKT residual {kkt_residual:e})")]
    Convergence {
        iterations: usize,
        kkt_residual: f64,
        best_alphas: Vec<f64>,
    },

    #[error("sweep failed at s = {s}: {source}")]
    Sweep {
        s: f64,
        #[source]
        source: Box<SvddError>,
    },

    /// No contiguous zero run of the required length was found. The zero mask
    /// (aligned with the interior grid points) is returned for diagnostics.
    #[error("no zero plateau of the second derivative found ({} of {} points in band)", mask.iter().filter(|m| **m).count(), mask.len())]
    NoPeakFound { mask: Vec<bool> },

    #[error("unsupported model format_version {found} (expected {expected})")]
    SchemaMismatch { found: u32, expected: u32 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SvddError>;
