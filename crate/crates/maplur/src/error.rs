use std::path::{Path, PathBuf};

use maplur_core::Error as CoreError;

/// Workbench errors. Each maps onto a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("tile fetch failed: {0}")]
    Fetch(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Exit code of a successful run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;
pub const EXIT_CAPACITY: i32 = 5;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Core(CoreError::InvalidArgument(_)) => EXIT_CONFIG,
            Error::Core(CoreError::Divergence { .. }) => EXIT_DIVERGENCE,
            Error::Core(CoreError::Capacity { .. }) => EXIT_CAPACITY,
            _ => EXIT_DATA,
        }
    }

    pub fn data(path: impl AsRef<Path>, message: impl std::fmt::Display) -> Self {
        Error::Data { path: path.as_ref().to_path_buf(), message: message.to_string() }
    }
}

/// Attaches a path to I/O errors.
pub trait IoContext<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl AsRef<Path>) -> Result<T> {
        self.map_err(|source| Error::Io { path: path.as_ref().to_path_buf(), source })
    }
}
