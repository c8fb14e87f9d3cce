//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("unsupported dimension {0} (tori support D = 1, 2, 3)")]
    UnsupportedDimension(usize),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("ghost index {index} already present in mask {mask:#b}")]
    UndefinedWedge { mask: u8, index: usize },

    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },

    #[error("vielbein singular: min |det e| = {min_det:.3e} on sample grid")]
    SingularVielbein { min_det: f64 },

    #[error("metric not positive definite on sample grid (min eigenvalue {min_eig:.3e})")]
    NonPositiveMetric { min_eig: f64 },

    #[error("imaginary residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    ImaginaryResidual { residual: f64, tol: f64 },

    #[error("eigensolver failed on degree-{degree} block: {reason}")]
    EigenFailure { degree: usize, reason: String },

    #[error("backward error {err:.3e} above contract 1e-8 for eigenvalue {index} of degree-{degree} block")]
    BackwardError {
        degree: usize,
        index: usize,
        err: f64,
    },

    #[error("ambiguous zero-mode gap: largest candidate {candidate:.3e} vs smallest rest {rest:.3e} (needs factor 10)")]
    AmbiguousGap { candidate: f64, rest: f64 },

    #[error("determinant factor within {dist:.3e} of a pole at eigenvalue {re:.6e}{im:+.6e}i")]
    PoleProximity { dist: f64, re: f64, im: f64 },

    #[error("no thermodynamic-equilibrium state: {0}")]
    NoTeState(String),

    #[error("non-hyperbolic fixed point at {location:?}: |det(1 - M_-t)| = {det:.3e}")]
    NonHyperbolic { location: Vec<f64>, det: f64 },

    #[error("non-finite state in trajectory {trajectory} at step {step}")]
    NonFiniteState { trajectory: usize, step: usize },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("degree-{degree} block order {order} exceeds dense cap {cap}")]
    BlockTooLarge {
        degree: usize,
        order: usize,
        cap: usize,
    },

    #[error("scenario config: {0}")]
    Config(String),

    #[error("invariant `{name}` failed: {detail}")]
    InvariantFailed { name: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FlowError>;
