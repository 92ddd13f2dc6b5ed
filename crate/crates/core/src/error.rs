use std::path::PathBuf;

/// Errors produced anywhere in the clustering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not a dataset: {path}: {reason}")]
    NotADataset { path: PathBuf, reason: String },

    #[error("format error in {file}, {record}: {reason}")]
    Format {
        file: String,
        record: String,
        reason: String,
    },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("rank error: requested {requested} components but data has rank {rank}")]
    Rank { requested: usize, rank: usize },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("degenerate cluster {cluster}: soft mass {mass:.3e}; try a smaller K")]
    DegenerateCluster { cluster: usize, mass: f64 },

    #[error("infinite loss: q[{row}][{col}] = 0 where p > 0")]
    InfiniteLoss { row: usize, col: usize },

    #[error("training diverged at epoch {epoch} ({stage}): loss is not finite")]
    Divergence { epoch: usize, stage: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
