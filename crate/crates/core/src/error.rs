use std::fmt;

/// Training phase a numeric failure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Codes,
    Dictionary,
    Projection,
    Classify,
    Prox,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Codes => "codes",
            Phase::Dictionary => "dict",
            Phase::Projection => "proj",
            Phase::Classify => "classify",
            Phase::Prox => "prox",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numeric failure in {phase} phase at iteration {iteration}: {message}")]
    Numeric {
        phase: Phase,
        iteration: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numeric(phase: Phase, iteration: usize, message: impl Into<String>) -> Self {
        Error::Numeric {
            phase,
            iteration,
            message: message.into(),
        }
    }

    /// Re-tags a numeric failure with the phase and outer iteration it surfaced in.
    pub fn in_phase(self, phase: Phase, iteration: usize) -> Self {
        match self {
            Error::Numeric {
                message,
                iteration: inner,
                ..
            } => Error::Numeric {
                phase,
                iteration,
                message: format!("{message} (inner iteration {inner})"),
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
