use std::path::PathBuf;

use bayescomp_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },

    #[error("{}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),
}

impl HarnessError {
    /// 1 for validation errors, 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::NumericFailure(_) => 2,
            HarnessError::Core(e) => match e {
                CoreError::Numeric(_) | CoreError::SingularPrecision | CoreError::QuadratureBounds { .. } => 2,
                _ => 1,
            },
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Json { path, source }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
