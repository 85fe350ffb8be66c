use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sequence")]
    EmptySequence,

    #[error("gamma {0} outside [0, 1)")]
    GammaOutOfRange(f64),

    #[error("label id {id} is not valid for a map with {classes} classes")]
    InvalidLabel { id: usize, classes: usize },

    #[error("unknown label token {0:?}")]
    UnknownToken(String),

    #[error("invalid label map: {0}")]
    InvalidLabelMap(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("video {video}: {rows} feature rows for {frames} frames")]
    RowMismatch { video: String, rows: usize, frames: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {0:?} missing from embedding table")]
    MissingEmbedding(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("forward cache is stale (cache version {cache}, parameter version {params})")]
    StaleCache { cache: u64, params: u64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("video {video}: missing {what} ({path})")]
    MissingFile {
        what: &'static str,
        video: String,
        path: PathBuf,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
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

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

/// Attaches a stage name to an error result.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
