use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterative solver diverged or produced non-finite values. `best` carries the
    /// best parameter vector seen before the failure, when one exists.
    #[error("numerical failure: {message}")]
    NumericalFailure { message: String, best: Option<Vec<f64>> },

    #[error("point(s) at or behind the camera: indices {indices:?}")]
    BehindCamera { indices: Vec<usize> },

    #[error("thresholding produced no foreground pixels")]
    NoForeground,

    #[error("refinement oracle failed: {0}")]
    Oracle(String),

    #[error("no admissible viewpoint among the candidate samples")]
    EmptySearchSpace,

    #[error("every curve vertex lies behind the camera")]
    EmptyCurve,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure {
            message: msg.into(),
            best: None,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end:
    /// 2 for invalid input of any kind, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalFailure { .. } => 3,
            _ => 2,
        }
    }
}
