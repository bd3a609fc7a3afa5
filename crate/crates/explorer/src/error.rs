use std::io;
use std::path::{Path, PathBuf};

use owa_core::criteria::PrepError;
use owa_core::{ClusterError, GridError, OwaError, StrategyError};

use crate::ascii::AsciiError;
use crate::store::StoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Ascii { path: PathBuf, source: AsciiError },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Store(#[from] StoreError),
    #[error("{0}")]
    Grid(#[from] GridError),
    #[error("{0}")]
    Prep(#[from] PrepError),
    #[error("{0}")]
    Owa(#[from] OwaError),
    #[error("{}{source}", index.map(|i| format!("design point {i}: ")).unwrap_or_default())]
    Strategy {
        index: Option<usize>,
        source: StrategyError,
    },
    #[error("{0}")]
    Data(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub fn csv(path: impl AsRef<Path>) -> impl FnOnce(csv::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Csv { path, source }
    }

    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Process exit status: 2 configuration, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Strategy { source, .. } if source.is_numerical() => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

impl From<StrategyError> for Error {
    fn from(source: StrategyError) -> Self {
        Error::Strategy {
            index: None,
            source,
        }
    }
}

impl<E: std::fmt::Display> From<ClusterError<E>> for Error {
    fn from(e: ClusterError<E>) -> Self {
        match e {
            ClusterError::BadK { .. } => Error::Config(e.to_string()),
            other => Error::Data(other.to_string()),
        }
    }
}
