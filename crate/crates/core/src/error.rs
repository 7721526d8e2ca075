use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty inventory: no records retained (total {total}, residential {residential})")]
    EmptyInventory { total: usize, residential: usize },

    #[error("window overflow: building {id} spans {extent_m:.1} m, window is {window_m:.1} m")]
    WindowOverflow {
        id: String,
        extent_m: f64,
        window_m: f64,
    },

    #[error("degenerate polygon: building {id} has zero area")]
    DegeneratePolygon { id: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("missing EUI for archetype `{archetype}`")]
    MissingEui { archetype: String },

    #[error("stage `{stage}` must run first: missing {path}")]
    MissingPrerequisite { stage: String, path: PathBuf },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonFinite(_) | Error::Divergence { .. } => 4,
            _ => 3,
        }
    }
}
