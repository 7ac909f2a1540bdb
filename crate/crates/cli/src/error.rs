use std::io;
use std::path::PathBuf;

use thiserror::Error;
use wppl::lang::ParseError;
use wppl::meta::{MetaError, ReferenceError};
use wppl::progen::ProgenError;
use wppl::samplers::{CacheError, DiagnosticError, HmcError, ImportanceError};
use wppl::semantics::{DensityError, SimulationError};
use wppl::autodiff::CheckpointError;
use wppl::whitebox::{BankLoadError, InferError, IsPredError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("{}: {source}", path.display())]
    Cache {
        path: PathBuf,
        #[source]
        source: CacheError,
    },
    #[error("{}: {source}", path.display())]
    Bank {
        path: PathBuf,
        #[source]
        source: BankLoadError,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Progen(#[from] ProgenError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    /// 1 for user errors, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! numerical {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Numerical(e.to_string())
            }
        }
    )*};
}

numerical!(HmcError, ImportanceError, SimulationError, DiagnosticError);

impl From<DensityError> for CliError {
    fn from(e: DensityError) -> Self {
        match e {
            DensityError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<InferError> for CliError {
    fn from(e: InferError) -> Self {
        match e {
            InferError::NonFinite | InferError::Tape(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<IsPredError> for CliError {
    fn from(e: IsPredError) -> Self {
        match e {
            IsPredError::Infer(e) => e.into(),
            IsPredError::Density(e) => e.into(),
            IsPredError::Importance(e) => e.into(),
        }
    }
}

impl From<MetaError> for CliError {
    fn from(e: MetaError) -> Self {
        match e {
            MetaError::Infer(e) => e.into(),
            MetaError::NonFinite { .. } | MetaError::Tape(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ReferenceError> for CliError {
    fn from(e: ReferenceError) -> Self {
        match e {
            ReferenceError::Analytic(_) | ReferenceError::NoLatents => CliError::Usage(e.to_string()),
            ReferenceError::Density(e) => e.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Usage(e.to_string())
    }
}
