use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("alphabet must contain at least one symbol")]
    EmptyAlphabet,

    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("invalid probability {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("support violation at flat index {index}: p > 0 where q = 0")]
    SupportViolation { index: usize },

    #[error("non-finite input")]
    NonFiniteInput,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} value {value} outside alphabet of size {size}")]
    IndexOutOfAlphabet {
        what: &'static str,
        value: usize,
        size: usize,
    },

    #[error("enumeration space of {size} cells exceeds cap {cap}")]
    HorizonTooLarge { size: u128, cap: u128 },

    #[error("history length {t} exceeds final modelled step {final_step}")]
    HorizonExceeded { t: usize, final_step: usize },

    #[error("history has zero probability under the model for action sequence {action_seq}")]
    ZeroEvidence { action_seq: String },

    #[error("variational distribution puts mass on a model-zero assignment (action sequence {action_seq})")]
    ModelZero { action_seq: String },

    #[error("coordinate ascent increased the objective at sweep {sweep}: {previous} -> {current}")]
    NonDecreasingGuard {
        sweep: usize,
        previous: f64,
        current: f64,
    },

    #[error("{what}: {lhs} != {rhs}")]
    IdentityViolation {
        what: &'static str,
        lhs: f64,
        rhs: f64,
    },

    #[error("normaliser underflowed: every mass is zero")]
    DegenerateNormalizer,

    #[error("action sequence {action_seq}: {source}")]
    Block {
        action_seq: String,
        #[source]
        source: Box<Error>,
    },

    #[error("agent failed at step {step}: {source}")]
    Agent {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("alphabet mismatch: {first} = {first_size} but {second} = {second_size}")]
    AlphabetMismatch {
        first: String,
        first_size: usize,
        second: String,
        second_size: usize,
    },

    #[error("config: {0}")]
    Config(String),

    /// A config field failed validation.
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
