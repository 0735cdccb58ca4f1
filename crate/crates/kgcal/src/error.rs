use std::io;
use std::path::PathBuf;

pub type Result<T, E = KgcalError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum KgcalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: unknown {kind} {label:?} (dictionaries are frozen)")]
    Vocabulary {
        path: PathBuf,
        line: usize,
        kind: &'static str,
        label: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] kgcal_core::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    /// A pipeline stage failed; `stage` names it for diagnostics.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<KgcalError>,
    },
}

impl KgcalError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        KgcalError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        KgcalError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        KgcalError::Config(message.into())
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            already @ KgcalError::Stage { .. } => already,
            other => KgcalError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Name of the failing pipeline stage, if known.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            KgcalError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// The error without its stage tag.
    pub fn without_stage(&self) -> &KgcalError {
        match self {
            KgcalError::Stage { source, .. } => source,
            other => other,
        }
    }
}

/// Tags the error of a fallible step with the stage it belongs to.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<KgcalError>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.into().in_stage(stage))
    }
}
