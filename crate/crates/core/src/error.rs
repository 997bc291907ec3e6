//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate quaternion: norm {norm:.3e} is below {eps:.0e}")]
    DegenerateQuaternion { norm: f64, eps: f64 },

    #[error("degenerate rotation axis: zero length")]
    DegenerateAxis,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate edge {u}-{v} at line {line}")]
    DuplicateEdge { u: usize, v: usize, line: usize },

    #[error("self loop on node {node} at line {line}")]
    SelfLoop { node: usize, line: usize },

    #[error("node ids are not contiguous: {msg}")]
    NonContiguousIds { msg: String },

    #[error("graph is not connected ({components} components)")]
    DisconnectedGraph { components: usize },

    #[error("node estimates are missing")]
    MissingEstimate,

    #[error("ground-truth rotations are missing")]
    MissingGroundTruth,

    #[error("dataset contains no graphs")]
    EmptyDataset,

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("softmax over an empty set")]
    EmptySet,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("tape corrupt: {0}")]
    TapeCorrupt(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint format version {found} is unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("training diverged: loss is not finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
