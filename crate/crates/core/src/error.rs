use crate::tangle::VertexId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),

    #[error("timestamp {timestamp} is not after the newest vertex at {newest}")]
    NonIncreasingTimestamp { timestamp: f64, newest: f64 },

    #[error("vertex {0} is not in the view")]
    NotInView(VertexId),

    #[error("vertex {0} is a tip of the view and has no outgoing transitions")]
    AbsorbingState(VertexId),

    #[error("random walk exceeded the step cap of {0}")]
    StepCapExceeded(usize),

    #[error("view has {size} vertices, above the exact solver cap of {cap}")]
    SolverCapExceeded { size: usize, cap: usize },

    #[error("exit-distribution solver failed: {0}")]
    Solver(String),

    #[error("invalid walk parameter: {0}")]
    InvalidParams(String),

    #[error("no conflict-free tip pair found after {0} draws")]
    NoConflictFreePair(usize),

    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),

    #[error("undefined metric: {0}")]
    Undefined(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("record {record}: {message}")]
    BadRecord { record: u64, message: String },
}
