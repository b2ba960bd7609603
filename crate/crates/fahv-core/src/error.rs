use thiserror::Error;

use crate::model::Channel;

/// Everything that can go wrong while evaluating the plant, the observers,
/// the control laws or a whole simulation run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state outside flight envelope: {quantity} = {value} not in [{lo}, {hi}]")]
    EnvelopeViolation {
        quantity: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("control gain g_{channel} = {value:e} is below the floor {floor:e}")]
    SingularControlGain {
        channel: Channel,
        value: f64,
        floor: f64,
    },

    #[error("arcsin argument {ratio} outside [-1, 1] (observer divergence)")]
    ArcsinDomain { ratio: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("prescribed performance bound breached on {channel} channel at t = {t:.4} s (xi = {xi:.6})")]
    BoundBreach { channel: Channel, t: f64, xi: f64 },

    #[error("divergence at t = {t:.4} s: {signal} = {value:e}")]
    Divergence {
        t: f64,
        signal: &'static str,
        value: f64,
    },

    #[error("non-finite derivative in component {index} at t = {t:.6} s")]
    NonFiniteDerivative { index: usize, t: f64 },

    #[error("trajectory log is empty")]
    EmptyLog,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid value for `{key}`: {constraint}")]
    Validation { key: String, constraint: String },
}

impl Error {
    /// Simulation time attached to the error, if any.
    pub fn time(&self) -> Option<f64> {
        match self {
            Error::BoundBreach { t, .. }
            | Error::Divergence { t, .. }
            | Error::NonFiniteDerivative { t, .. } => Some(*t),
            _ => None,
        }
    }

    pub(crate) fn validation(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            constraint: constraint.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
