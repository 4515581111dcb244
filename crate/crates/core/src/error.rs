use thiserror::Error;

use crate::spectrum::ModeIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("mode {mode} lies outside the truncation window |k| <= {radius}")]
    WindowTooSmall { mode: ModeIndex, radius: usize },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("invalid boundary condition: {0}")]
    InvalidCondition(String),

    #[error("matrix is not an orthogonal projector: idempotency defect {idempotency:e}, hermiticity defect {hermiticity:e}")]
    InvalidProjector { idempotency: f64, hermiticity: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("ill-conditioned rank decision in {context}: gap ratio {gap:e} below required {required:e}")]
    IllConditioned {
        context: String,
        gap: f64,
        required: f64,
    },

    #[error("subspace is not a graph over the cut: smallest singular value {smallest:e} below threshold {threshold:e}")]
    NotGraphDecomposable { smallest: f64, threshold: f64 },

    #[error("diagnostic routes disagree: {0}")]
    InternalInconsistency(String),

    #[error("evolution step too large: unitarity deviation {deviation:e} exceeds {tolerance:e}")]
    StepTooLarge { deviation: f64, tolerance: f64 },

    #[error("eta extrapolation did not converge: residual {residual:e}")]
    NotConverged { residual: f64 },

    #[error("index formula assembled to non-integer value {value}")]
    ConventionViolation { value: f64 },

    #[error("index formula requires product structure: {0}")]
    NonProduct(String),

    #[error("invalid window schedule: {0}")]
    InvalidSchedule(String),
}
