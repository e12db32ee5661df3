use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite vehicle state: {0}")]
    NonFiniteState(String),
    #[error("circles overlap: distance {distance:.4} m <= combined radius {radii:.4} m")]
    Overlap { distance: f64, radii: f64 },
    #[error("horizon mismatch: expected {expected} states, found {found}")]
    HorizonMismatch { expected: usize, found: usize },
    #[error("segment length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("no prediction supplied for fixed agent {0}")]
    MissingPrediction(usize),
    #[error("agent {0} appears more than once in the problem")]
    DuplicateAgent(usize),
    #[error("unknown agent {0}")]
    UnknownAgent(usize),
    #[error("road of length {length:.1} m is too short; population needs {required:.1} m")]
    RoadTooShort { length: f64, required: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
