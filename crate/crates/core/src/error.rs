use thiserror::Error;

/// Errors raised by the core numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("forward pass has not been run on this network yet")]
    NoActivations,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("operation `{op}` is not defined for the {kind} model")]
    WrongModelKind { op: &'static str, kind: &'static str },

    #[error("genotype is missing component indices required by the {0} model")]
    MissingComponents(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sharing ratio {rho} is outside [1, {n_synapses}]")]
    RhoOutOfRange { rho: usize, n_synapses: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
