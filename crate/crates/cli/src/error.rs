use std::path::PathBuf;

use thiserror::Error;

/// Failures of a pipeline command. Core errors carry the stage they came from.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: prpca_core::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("output directory {} is in use by another run (remove {} if stale)", .0.display(), .0.join(crate::manifest::LOCK_NAME).display())]
    Locked(PathBuf),

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// The underlying core error, if any.
    pub fn core(&self) -> Option<&prpca_core::Error> {
        match self {
            CliError::Stage { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> StageExt<T> for prpca_core::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
