use thiserror::Error;

#[derive(Debug, Error)]
pub enum AceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular parameterization: {0}")]
    Singular(String),

    #[error("undefined LD50: {0}")]
    UndefinedLd50(String),

    #[error("degenerate importance weights: {0}")]
    DegenerateWeights(String),

    #[error("singular Fisher information after {0} redraws")]
    SingularInformation(usize),

    #[error("model `{model}` does not provide {capability}")]
    Unsupported { model: String, capability: &'static str },

    #[error("utility evaluations are constant; nothing to emulate")]
    ConstantResponse,

    #[error("no candidate satisfies the coordinate domain")]
    EmptyDomain,

    #[error("posterior ingestion failed: {0}")]
    Ingestion(String),

    #[error("all {0} starts failed; first error: {1}")]
    AllStartsFailed(usize, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = AceError> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(AceError::InvalidArgument(msg.into()))
}
