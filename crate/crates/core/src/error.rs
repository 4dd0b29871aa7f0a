use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// The CLI maps these onto distinct exit codes; see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or invalid arguments to an operation.
    #[error("config error: {0}")]
    Config(String),

    /// An operation received an empty input it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Tensor/sequence dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed or inconsistent data (manifests, audio files, feature files).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure (NaN/Inf loss, infeasible gradient request).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable process exit code for this error class.
    ///
    /// 2 = config, 3 = data/io, 4 = numeric, 1 = anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::EmptyInput(_) | Error::Shape(_) => 2,
            Error::Data(_) | Error::Io(_) | Error::Wav(_) | Error::Json(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
