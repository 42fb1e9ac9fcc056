use std::path::PathBuf;

use thiserror::Error;

pub mod exit {
    pub const OK: i32 = 0;
    pub const INADMISSIBLE: i32 = 2;
    pub const EMPTY_SET: i32 = 3;
    pub const INPUT: i32 = 4;
    pub const INTERNAL: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] minimax_core::Error),

    #[error("direction '{name}' is inadmissible: distance {residual:e} from the admissible range")]
    Inadmissible { name: String, residual: f64 },

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use minimax_core::Error as E;
        match self {
            Self::Input(_) | Self::Io { .. } => exit::INPUT,
            Self::Inadmissible { .. } => exit::INADMISSIBLE,
            Self::Verification(_) => exit::INTERNAL,
            Self::Core(e) => match e {
                E::InadmissibleDirection { .. } => exit::INADMISSIBLE,
                E::EmptyAposterioriSet { .. } => exit::EMPTY_SET,
                E::SingularPivot { .. } | E::InternalConsistency(_) => exit::INTERNAL,
                E::DimensionMismatch { .. } | E::InvalidParameter(_) | E::IndexNotOne { .. } | E::GridMismatch(_) => {
                    exit::INPUT
                }
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
