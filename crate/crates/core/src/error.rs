use thiserror::Error;

use crate::sdp::SdpReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("measurement model mismatch: {0}")]
    ModelMismatch(String),

    #[error("root pairing failed: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    PairingFailed { residual: f64, tol: f64 },

    #[error("|delta| = {delta} is smaller than the l1 norm {l1}")]
    DeltaTooSmall { delta: f64, l1: f64 },

    #[error("spectrum too close to zero for log-magnitude recovery (min/max = {ratio:.3e})")]
    IllConditioned { ratio: f64 },

    #[error("window never covers sample {index}")]
    DivisionByZero { index: usize },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("ADMM did not converge after {} iterations", .0.iterations)]
    NotConverged(Box<SdpReport>),

    #[error("window is not admissible")]
    NotAdmissible,

    #[error("no positive entries in the main-diagonal estimate")]
    EmptyP,

    #[error("Gauss-Newton normal matrix is singular")]
    SingularJacobian,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
