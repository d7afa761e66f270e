//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: {message}")]
    ObjParse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("vertex {index} at or behind the perspective camera plane (depth {depth:.3e})")]
    VertexBehindCamera { index: usize, depth: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate edge (zero projected length)")]
    DegenerateEdge,

    #[error("degenerate triangle")]
    DegenerateTriangle,

    #[error("non-finite gradient at coordinate {index}")]
    NonFiniteGradient { index: usize },

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image encode error: {0}")]
    ImageEncode(String),
}
