use std::path::PathBuf;

/// Errors raised anywhere in the experiment chain.
///
/// Variants fall into three families that the CLI maps onto exit codes:
/// usage/config problems, data problems and numerical failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing directory {0}")]
    MissingDirectory(PathBuf),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown class directory {dir:?} (under {root})")]
    UnknownClass { root: PathBuf, dir: String },

    #[error("{file}:{line}: {msg}")]
    Malformed {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("class {class} has {count} windows, need at least {needed}")]
    TooFewWindows {
        class: String,
        count: usize,
        needed: usize,
    },

    #[error("dataset has no fold assignment; run fold assignment first")]
    NoFolds,

    #[error("need at least two classes, found {0}")]
    NotEnoughClasses(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("signal too short: length {len}, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("every feature has zero variance on the fit rows")]
    AllFeaturesRemoved,

    #[error("feature {name} has zero variance on the fit rows")]
    ZeroVariance { name: String },

    #[error("both groups have zero variance")]
    DegenerateVariance,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("stage {index} ({stage}): {source}")]
    Stage {
        index: usize,
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("missing artifact {path}; run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::NonFinite(_)
            | Error::Numerical(_)
            | Error::DegenerateVariance
            | Error::AllFeaturesRemoved
            | Error::ZeroVariance { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
