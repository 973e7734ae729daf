use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },
    #[error("partition error: {0}")]
    Partition(String),
    #[error("shard error: {0}")]
    Shard(String),
    #[error("aggregation error: {0}")]
    Aggregation(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("permutation {permutation}, phase {phase}: {source}")]
    Phase {
        permutation: String,
        phase: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
