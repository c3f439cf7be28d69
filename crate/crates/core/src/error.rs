//! Error types shared across the library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A gamma-type function was evaluated at a nonpositive integer.
    #[error("pole: {what} evaluated at {arg} (nonpositive integer)")]
    Pole { what: &'static str, arg: String },

    /// Parameters fall outside the domain required by an operation.
    /// `detail` names the failing inequality.
    #[error("parameter domain violation: {detail}")]
    Domain { detail: String },

    /// A quantity the theory guarantees to be real carried a non-negligible
    /// imaginary part.
    #[error("complex residue: {what} has |Im| = {imag:e} beyond tolerance (Re = {real:e})")]
    ComplexResidue {
        what: &'static str,
        real: f64,
        imag: f64,
    },

    /// An internal consistency identity failed beyond tolerance.
    #[error("consistency failure in {what}: deviation {deviation:e} exceeds {tolerance:e}")]
    Consistency {
        what: &'static str,
        deviation: f64,
        tolerance: f64,
    },

    /// Malformed input (bad signature parts, bad flags, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A simulation exceeded its event-count guard.
    #[error("step-count guard tripped after {events} events (suspected explosion or misconfiguration)")]
    StepGuard { events: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(detail: impl Into<String>) -> Self {
        Error::Domain {
            detail: detail.into(),
        }
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        Error::Invalid(detail.into())
    }
}
