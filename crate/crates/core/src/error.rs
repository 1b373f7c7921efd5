use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or loaded value violates a documented precondition.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error(transparent)]
    Load(#[from] LoadError),

    #[error("training diverged: non-finite loss at iteration {iteration} (batch seed {batch_seed:#018x})")]
    NonFiniteLoss { iteration: usize, batch_seed: u64 },

    #[error("degenerate single-class dataset: all {count} items labeled {label}")]
    SingleClass { label: u8, count: usize },

    #[error("missing artifact for stage `{stage}`: {path}")]
    MissingArtifact { stage: String, path: PathBuf },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("candidate {index:?}: {source}")]
    Candidate {
        index: [usize; 3],
        #[source]
        source: Box<Error>,
    },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Failures while reading persisted datasets and checkpoints.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("manifest not found: {0}")]
    MissingManifest(PathBuf),

    #[error("corrupt manifest {path}: {reason}")]
    CorruptManifest { path: PathBuf, reason: String },

    #[error("frame `{frame_id}`: image file missing at {path}")]
    MissingImage { frame_id: String, path: PathBuf },

    #[error("frame `{frame_id}`: image is {actual_w}x{actual_h}, manifest says {expected_w}x{expected_h}")]
    DimensionMismatch {
        frame_id: String,
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("frame `{frame_id}`: cannot decode {path}: {reason}")]
    BadImage {
        frame_id: String,
        path: PathBuf,
        reason: String,
    },

    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e @ Error::MissingArtifact { .. } => e,
            other => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(other),
            },
        }
    }
}
