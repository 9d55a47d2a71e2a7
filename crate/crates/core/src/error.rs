use num_complex::Complex64;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite entry in {what} at ({row}, {col})")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("generalized eigen-decomposition failed to converge for a pencil of dimension {dim}")]
    Decomposition { dim: usize },

    #[error("pencil of dimension {dim} is singular (det(λE - A) vanishes identically)")]
    SingularPencil { dim: usize },

    #[error("delay multipliers {delays:?} are not commensurable on a common grid")]
    Incommensurable { delays: Vec<f64> },

    #[error("companion construction needs at least one coefficient block")]
    EmptyBlocks,

    #[error("singular matrix: {context}")]
    Singular { context: String },

    #[error("growth function has a pole at λh = {lambda_h}")]
    Pole { lambda_h: Complex64 },

    #[error("discrete eigenvalue is exactly zero: the method annihilates this mode")]
    Annihilated,

    #[error("damping is undefined for the zero eigenvalue")]
    ZeroMode,

    #[error("degenerate Möbius quadruple (ad - bc = 0)")]
    DegenerateMoebius,

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("equilibrium residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotEquilibrium { residual: f64, tol: f64 },

    #[error("inconsistent initial condition: algebraic residual {residual:.3e} after projection")]
    InconsistentInitial { residual: f64 },

    #[error("no crossing in [{lo}, {hi}]: metric is {at_lo:.6e} at the lower end and {at_hi:.6e} at the upper end")]
    NoCrossing {
        lo: f64,
        hi: f64,
        at_lo: f64,
        at_hi: f64,
    },

    #[error("empty spectrum: {0}")]
    EmptySpectrum(&'static str),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::NonFinite { .. }
                | Error::Incommensurable { .. }
                | Error::EmptyBlocks
                | Error::DegenerateMoebius
                | Error::IndexOutOfRange { .. }
                | Error::UnknownModel(_)
                | Error::UnknownMethod(_)
                | Error::InvalidParameter(_)
                | Error::Unsupported(_)
                | Error::Parse { .. }
                | Error::Io { .. }
        )
    }
}
