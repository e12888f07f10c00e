use thiserror::Error;

use crate::protocol::CheckId;
use crate::quantum::QuantumError;

/// Invalid run parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("pair count must be at least 1")]
    NoPairs,
    #[error("{name} must lie in (0, 1), got {value}")]
    Fraction { name: &'static str, value: f64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    Proportion { name: &'static str, value: f64 },
    #[error("party count must be 2 or 3, got {0}")]
    Parties(u8),
    #[error("attack hop {hop} does not exist in a {parties}-party chain")]
    AttackHop { hop: u8, parties: u8 },
    #[error("trial count must be at least 1")]
    NoTrials,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("protocol order violation: {0}")]
    OrderViolation(&'static str),
    #[error("{0} check has no pairs to sample")]
    EmptySample(CheckId),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}
