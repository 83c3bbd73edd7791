use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed file: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: unsupported voxel datatype code {code}")]
    UnsupportedType { path: PathBuf, code: i16 },
    #[error("{path}: {voxels} voxels exceed the memory budget of {budget}")]
    Resource { path: PathBuf, voxels: u64, budget: u64 },
    /// Bad user input: arguments, configuration, out-of-range values.
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] vcfscan_core::Error),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Error {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    /// Process exit status: 2 for validation errors, 3 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Core(vcfscan_core::Error::InvalidConfig(_) | vcfscan_core::Error::Resolution { .. }) => 2,
            _ => 3,
        }
    }
}
