use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("columns are not orthonormal (‖XᵀX − I‖_F = {residual:.3e})")]
    NotOrthonormal { residual: f64 },

    #[error("direction is not tangent at the base point (‖XᵀU + UᵀX‖_F = {residual:.3e})")]
    NotTangent { residual: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("matrix is rank deficient (smallest pivot {pivot:.3e})")]
    RankDeficient { pivot: f64 },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sample list is empty")]
    EmptySamples,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::ShapeMismatch {
        expected: format!("{}×{}", expected.0, expected.1),
        got: format!("{}×{}", got.0, got.1),
    }
}
