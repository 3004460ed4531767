use thiserror::Error;

#[derive(Debug, Error)]
pub enum OicaError {
    #[error("row {row} has norm {norm:e}, cannot be projected onto the unit sphere")]
    ZeroRow { row: usize, norm: f64 },

    #[error("regularizer must be strictly positive, got {0}")]
    InvalidEpsilon(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("objective is not finite ({value}) at iteration {iter}")]
    NonFiniteObjective { iter: usize, value: f64 },

    #[error("configuration is not an exact tiled orthonormal basis: {0}")]
    NotPathological(String),

    #[error("image {width}x{height} is smaller than patch size {patch}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        patch: usize,
    },

    #[error("covariance is rank deficient: {0}")]
    RankDeficient(String),

    #[error("matrix is singular")]
    Singular,

    #[error("patch is constant, nothing to fit")]
    ConstantPatch,

    #[error("no Gabor candidate beat the zero-kernel baseline (best mse {best_mse:.4})")]
    FitDiverged { best_mse: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OicaError>;
