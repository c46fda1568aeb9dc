use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("malformed volume header {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("payload size mismatch: header declares {expected} bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },

    #[error("invalid phantom spec: {0}")]
    InvalidPhantomSpec(String),

    #[error("could not place {requested} non-overlapping blobs (placed {placed})")]
    Capacity { requested: usize, placed: usize },

    #[error("no spine found above {threshold} HU")]
    NoSpineFound { threshold: f32 },

    #[error("training set must contain both classes")]
    SingleClass,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point ({x:.2}, {y:.2}, {z:.2}) mm lies outside the volume")]
    OutOfBounds { x: f64, y: f64, z: f64 },

    #[error("tensor shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite activation after layer {layer}")]
    NonFinite { layer: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no lesions to compute sensitivity against")]
    NoLesions,

    #[error("cannot split {patients} patients into {folds} folds")]
    TooFewPatients { patients: usize, folds: usize },

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("missing artifact {path}: run `{stage}` first")]
    MissingArtifact { stage: &'static str, path: PathBuf },

    #[error("artifact {path} was produced by config {found}, current config is {expected}")]
    ConfigMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("stage `{stage}` failed{}: {source}", fold.map(|f| format!(" on fold {f}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        fold: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str, fold: Option<usize>) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                fold,
                source: Box::new(e),
            },
        }
    }
}
