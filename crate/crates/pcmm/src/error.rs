use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("cluster too small: need at least {needed} points, got {got}")]
    ClusterTooSmall { needed: usize, got: usize },

    #[error("non-finite coordinate in point {index}")]
    NonFinite { index: usize },

    #[error("degenerate plane support")]
    DegeneratePlaneSupport,

    #[error("empty surface support")]
    EmptySurfaceSupport,

    #[error("parameter out of range: ({u}, {v}) not in [0,1]^2")]
    ParamOutOfRange { u: f64, v: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error in {path:?} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("model file error at byte {offset}: {message}")]
    ModelFormat { offset: u64, message: String },

    #[error("unsupported model version {found:?} (expected PCMM1)")]
    VersionMismatch { found: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// Process exit code category: 1 usage, 2 input, 3 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidConfig(_) => 1,
            Error::EmptyInput
            | Error::NonFinite { .. }
            | Error::Parse { .. }
            | Error::ModelFormat { .. }
            | Error::VersionMismatch { .. }
            | Error::Io(_) => 2,
            Error::ClusterTooSmall { .. }
            | Error::DegeneratePlaneSupport
            | Error::EmptySurfaceSupport
            | Error::ParamOutOfRange { .. }
            | Error::Numerical(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
