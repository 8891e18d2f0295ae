use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("longitudinal bin {index} contains no points")]
    DegenerateBin { index: usize },

    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("board corner at the pattern origin (board {board})")]
    DegenerateCorner { board: usize },

    #[error("invalid parameter `{param}`: {reason}")]
    InvalidParams { param: String, reason: String },

    #[error("sawing pattern does not fit inside the log: corner exceeds minimum radius by {deficit_mm:.3} mm")]
    PatternDoesNotFit { deficit_mm: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::DegenerateBin { .. } => "DegenerateBin",
            Error::DegenerateCloud(_) => "DegenerateCloud",
            Error::PreconditionViolation(_) => "PreconditionViolation",
            Error::GridMismatch(_) => "GridMismatch",
            Error::DegenerateCorner { .. } => "DegenerateCorner",
            Error::InvalidParams { .. } => "InvalidParams",
            Error::PatternDoesNotFit { .. } => "PatternDoesNotFit",
            Error::Parse { .. } => "ParseError",
            Error::Json(_) => "ParseError",
            Error::Io(_) => "IOError",
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn param(param: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParams {
            param: param.to_string(),
            reason: reason.into(),
        }
    }
}
