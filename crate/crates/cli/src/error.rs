use std::fmt;

use setcomp_core::criteria::CriteriaError;
use setcomp_core::dataset::fusion::FusionError;
use setcomp_core::dataset::DatasetError;
use setcomp_core::embedstore::StoreError;
use setcomp_core::report::ReportError;

/// A failure carrying the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Malformed data or a failed evaluation (1).
    Failed(String),
    /// Bad flags, config file or parameters (2).
    Config(String),
    /// Fusion provider or encoder adapter failure (3).
    Provider(String),
    /// Unreadable input or unwritable output (4).
    Io(String),
    /// Sentences without embeddings (5).
    Missing(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Io(_) => 4,
            CliError::Missing(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Failed(m) => write!(f, "{m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Provider(m) => write!(f, "provider error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Missing(m) => write!(f, "missing embeddings: {m}"),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Adds the offending path to an I/O-class error.
pub fn at(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::InvalidRequest(_) => CliError::Config(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(_)
            | DatasetError::Parse { .. }
            | DatasetError::InvalidSample { .. } => CliError::Io(e.to_string()),
            DatasetError::MissingEmbedding(_) => CliError::Missing(e.to_string()),
            DatasetError::Fusion(f) => f.into(),
            DatasetError::EmptyInput
            | DatasetError::OutOfRangeScore { .. }
            | DatasetError::InvalidRecord { .. } => CliError::Config(e.to_string()),
            DatasetError::Geometry(_) => CliError::Failed(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CriteriaError> for CliError {
    fn from(e: CriteriaError) -> Self {
        match e {
            CriteriaError::Geometry { .. } => CliError::Failed(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::MissingCell(_) => CliError::Failed(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}
