//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("invalid exponent p = {0}")]
    InvalidExponent(f64),

    #[error("coefficient invariant violated: {0}")]
    Coefficient(String),

    #[error("BMO seminorm {measured:.6e} exceeds declared bound {declared:.6e}")]
    BmoBound { measured: f64, declared: f64 },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("accretivity violated: {0}")]
    Accretivity(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("linear solve did not reach tolerance: relative residual {residual:.3e}")]
    SolverBreakdown { residual: f64 },

    #[error("matrix size {size} exceeds dense cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("quadrature not converged: relative change {achieved:.3e} after {evaluations} evaluations")]
    QuadratureNotConverged { achieved: f64, evaluations: usize },

    #[error("tail not converged: relative tail {achieved:.3e} at t = {t_reached:.3e}")]
    TailNotConverged { achieved: f64, t_reached: f64 },

    #[error("insufficient samples for a fit: {0}")]
    InsufficientSamples(String),

    #[error("dense factorization failed: {0}")]
    Factorization(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
