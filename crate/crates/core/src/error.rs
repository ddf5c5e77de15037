use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },

    #[error("line {line}: invalid document: {reason}")]
    InvalidDocument { line: usize, reason: String },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("insufficient relevant {source_kind}s: requested {requested}, found {available}")]
    InsufficientPositives {
        source_kind: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("insufficient negatives in window: need {needed}, found {available}")]
    InsufficientNegatives { needed: usize, available: usize },

    #[error("empty mention surface")]
    EmptySurface,

    #[error("document `{0}` is not a tweet")]
    NotATweet(String),

    #[error("linker transport error (retriable): {0}")]
    Transport(String),

    #[error("linker response error: {0}")]
    LinkerResponse(String),

    #[error("document length must be positive")]
    ZeroLength,

    #[error("edge {{{0}, {1}}} missing or undercounted during removal")]
    EdgeMismatch(String, String),

    #[error("bias set already initialized")]
    BiasFrozen,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("training spec {spec}: {reason}")]
    InsufficientForSpec { spec: String, reason: String },

    #[error("unsupported model version {0}")]
    ModelVersion(u64),

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("missing ground-truth label for `{0}`")]
    MissingTruth(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
