use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlipError {
    #[error("invalid model parameter: {0}")]
    InvalidParams(String),

    #[error("singular configuration: {0}")]
    Singularity(&'static str),

    #[error("event {event} cannot be evaluated in phase {phase}")]
    IncompatiblePhase { event: &'static str, phase: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fixed-point iteration did not converge after {sweeps} sweeps ({remaining} cells still changing)")]
    NoConvergence { sweeps: usize, remaining: usize },

    #[error("infeasible at stage `{stage}`: {reason}")]
    Infeasible { stage: String, reason: String },

    #[error("step {index} failed: {kind}")]
    StepFailed { index: usize, kind: String },

    #[error("no transition detected")]
    NoTransition,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SlipError>;

impl From<std::io::Error> for SlipError {
    fn from(e: std::io::Error) -> Self {
        SlipError::Io(e.to_string())
    }
}
