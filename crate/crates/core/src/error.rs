use thiserror::Error;

/// Errors raised by the simulator and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{n_qubits} qubits exceeds the dense cap of {cap}")]
    CapExceeded { n_qubits: usize, cap: usize },

    #[error("invalid Pauli string: {0}")]
    InvalidPauli(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-Hermitian operator: imaginary part {imag:e} above tolerance")]
    NonHermitian { imag: f64 },

    #[error("time {t} outside schedule domain [0, {end}]")]
    ScheduleDomain { t: f64, end: f64 },

    #[error("norm drift {drift:e} exceeds tolerance {tolerance:e}; reduce the step size")]
    NormDrift { drift: f64, tolerance: f64 },

    #[error("conserved quantity must be diagonal (I/Z factors only)")]
    NonDiagonalConserved,

    #[error("operator does not conserve the sector structure (leakage {norm:e})")]
    NotConserved { norm: f64 },

    #[error("no usable reference state: {0}")]
    NoReference(String),

    #[error("branches are not orthogonal (overlap {overlap:e})")]
    NonOrthogonal { overlap: f64 },

    #[error("penalty expansion produced {terms} terms, budget is {budget}")]
    TermBudget { terms: usize, budget: usize },

    #[error("model file syntax error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("model validation failed: {0}")]
    Model(String),

    #[error("eigen residual {residual:e} above tolerance")]
    Residual { residual: f64 },

    #[error("series is empty")]
    EmptySeries,

    #[error("insufficient samples: {got} given, at least {need} required")]
    InsufficientSamples { got: usize, need: usize },

    #[error("no spectral peak above threshold")]
    NoPeaks,

    #[error("reconstructed energy {energy} not below reference energy {reference}")]
    AboveReference { energy: f64, reference: f64 },

    #[error("stage-3 Hamiltonians do not commute (norm {norm:e})")]
    CommutationFailure { norm: f64 },

    #[error("leakage {leakage:e} above threshold {max:e}")]
    Leakage { leakage: f64, max: f64 },

    #[error("at grid point {index} (tau = {tau}): {source}")]
    GridPoint {
        index: usize,
        tau: f64,
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by bad input or configuration, as opposed to a
    /// failed physics assertion.
    pub fn is_config(&self) -> bool {
        match self {
            Error::DimensionMismatch { .. }
            | Error::CapExceeded { .. }
            | Error::InvalidPauli(_)
            | Error::InvalidParameter(_)
            | Error::ScheduleDomain { .. }
            | Error::NonDiagonalConserved
            | Error::TermBudget { .. }
            | Error::Parse { .. }
            | Error::Model(_)
            | Error::EmptySeries
            | Error::InsufficientSamples { .. } => true,
            Error::GridPoint { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
