use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A session violates a structural or range constraint.
    #[error("malformed session: {0}")]
    MalformedSession(String),
    /// Input bytes could not be parsed; `location` names the line/column or field path.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("undefined measure: {0}")]
    UndefinedMeasure(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model input error: {0}")]
    ModelInput(String),
    #[error("pipeline order error: {0}")]
    PipelineOrder(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("baseline {baseline} inapplicable: {reason}")]
    BaselineInapplicable { baseline: String, reason: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
