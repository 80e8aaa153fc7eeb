//! Error type shared by every solver in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A coefficient, derivative or state became NaN or infinite.
    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("time grid mismatch: {0}")]
    Grid(String),

    /// The implicit per-step fixed point is not a contraction (`dt * lipschitz >= 1`).
    #[error("driver step is not contractive: dt * lipschitz = {product} >= 1")]
    Contraction { product: f64 },

    #[error("singular regression at step {step}: {detail}")]
    Singular { step: usize, detail: String },

    /// Evaluation requested outside the regression domain box.
    #[error("point {point:?} lies outside the domain box")]
    Domain { point: Vec<f64> },

    #[error("division by zero: {0}")]
    DivZero(String),

    /// The penalty schedule was exhausted before the penalty norm dropped below tolerance.
    /// Carries `(n, penalty_norm)` pairs for diagnosis.
    #[error("penalization did not converge: last penalty norm {last_norm:e} >= tol {tol:e}")]
    NoConverge {
        tol: f64,
        last_norm: f64,
        trace: Vec<(f64, f64)>,
    },

    #[error("explicit jump part unstable: dt * intensity = {0} > 1")]
    Stability(f64),

    #[error("jump shift leaves the padded grid: {0}")]
    Boundary(String),

    #[error("series tail {tail:e} exceeds tolerance {tol:e}")]
    Tail { tail: f64, tol: f64 },

    #[error("quadrature tail fraction {fraction:e} exceeds 1%")]
    Quadrature { fraction: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, e.g. `E_NUMERIC`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Numeric(_) => "E_NUMERIC",
            Error::Grid(_) => "E_GRID",
            Error::Contraction { .. } => "E_CONTRACTION",
            Error::Singular { .. } => "E_SINGULAR",
            Error::Domain { .. } => "E_DOMAIN",
            Error::DivZero(_) => "E_DIVZERO",
            Error::NoConverge { .. } => "E_NOCONVERGE",
            Error::Stability(_) => "E_STABILITY",
            Error::Boundary(_) => "E_BOUNDARY",
            Error::Tail { .. } => "E_TAIL",
            Error::Quadrature { .. } => "E_QUAD",
            Error::Invalid(_) => "E_INVALID",
            Error::Io(_) => "E_IO",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
