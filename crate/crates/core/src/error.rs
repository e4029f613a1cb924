use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the domain of the model.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// `required_n` evaluated at the funnel center, where the curve diverges.
    #[error("funnel curve is singular at p_bar = pinf = {pinf}")]
    Singular { pinf: f64 },

    /// The data carry no information for the requested estimate.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// No two-state chain reproduces the requested statistics.
    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    /// Malformed input file content, with a 1-based line number when known.
    #[error("{}", match .line { Some(l) => format!("line {l}: {message}"), None => message.clone() })]
    Data { line: Option<u64>, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn data(line: impl Into<Option<u64>>, message: impl Into<String>) -> Self {
        Error::Data {
            line: line.into(),
            message: message.into(),
        }
    }

    /// Process exit status used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::InvalidArgument(_) => 1,
            Error::Degenerate(_) | Error::Infeasible(_) | Error::Singular { .. } => 3,
            Error::EmptyInput(_) | Error::Data { .. } | Error::Io(_) => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
