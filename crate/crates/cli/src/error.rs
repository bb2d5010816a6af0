use std::path::{Path, PathBuf};

use mlsa::MlsaError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Every message carries its cause, so callers print one line without
/// walking a source chain.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),

    #[error("{stage} failed for {instance}: {cause}")]
    Stage {
        stage: &'static str,
        instance: String,
        cause: MlsaError,
    },

    #[error("{}: {cause}", path.display())]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("csv: {0}")]
    Csv(csv::Error),

    #[error("report serialization: {0}")]
    Serialize(toml::ser::Error),
}

impl HarnessError {
    pub fn io(path: &Path, cause: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            cause,
        }
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        Self::Csv(e)
    }
}

impl From<toml::ser::Error> for HarnessError {
    fn from(e: toml::ser::Error) -> Self {
        Self::Serialize(e)
    }
}

/// Attaches the stage name and instance id to a core error.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str, instance: &str) -> Result<T>;
}

impl<T> StageExt<T> for std::result::Result<T, MlsaError> {
    fn stage(self, stage: &'static str, instance: &str) -> Result<T> {
        self.map_err(|cause| HarnessError::Stage {
            stage,
            instance: instance.to_string(),
            cause,
        })
    }
}
