use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("measure has infinite total mass; truncate it first (eps > 0)")]
    InfiniteMass,

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("series did not converge within {cap} terms: {msg}")]
    SeriesDiverged { cap: usize, msg: String },

    #[error("perturbation tail bound {bound:.3e} exceeds tolerance {tol:.3e}; order {required} required")]
    TailBound {
        bound: f64,
        tol: f64,
        required: usize,
    },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("inadmissible parameter: {0}")]
    Admissibility(String),

    #[error("simulation budget exceeded: {0}")]
    Budget(String),
}

/// Coarse classification used by front ends to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidMeasure(_)
            | Error::Parse { .. }
            | Error::InvalidArgument(_)
            | Error::InfiniteMass
            | Error::Admissibility(_) => ErrorKind::Validation,
            Error::Quadrature(_)
            | Error::SeriesDiverged { .. }
            | Error::TailBound { .. }
            | Error::Overflow(_)
            | Error::Budget(_) => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
