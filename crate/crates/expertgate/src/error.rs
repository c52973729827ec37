use std::io;
use std::path::Path;

use expertgate_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("store corrupt: {0}")]
    StoreCorrupt(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 format, 3 parameter, 4 store corruption.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format(_) => 2,
            Error::Parameter(_) | Error::Io { .. } => 3,
            Error::StoreCorrupt(_) => 4,
            Error::Core(e) => match e {
                CoreError::Dimension(_) => 2,
                CoreError::Store(_) | CoreError::StatsRegime { .. } => 4,
                _ => 3,
            },
        }
    }
}
