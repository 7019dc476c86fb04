use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid concept name {0:?}")]
    InvalidName(String),
    #[error("unknown concept {0:?}")]
    UnknownConcept(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("inconsistent inputs: {0}")]
    Consistency(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid counters for {concept:?}: {message}")]
    Counters { concept: String, message: String },
    #[error("propagation failed for object {object:?} at concept {concept:?}: contradictory evidence")]
    Propagation { object: String, concept: String },
    #[error("generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the failure stems from bad user input rather than an internal fault.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Propagation { .. } | Error::Generation(_))
    }
}
