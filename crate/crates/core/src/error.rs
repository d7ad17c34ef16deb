use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node {index} does not belong to this graph")]
    InvalidNode { index: usize },

    #[error("operator {op} expects {expected} operands, got {got}")]
    Arity {
        op: &'static str,
        expected: &'static str,
        got: usize,
    },

    #[error("node {index} is not a variable")]
    NotVariable { index: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("basis index {index} out of range (basis size {size})")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("degenerate map: |det J| = {det:e} below floor at y = ({y0}, {y1})")]
    DegenerateMap { det: f64, y0: f64, y1: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("edge {edge} of patch {patch} matches {count} partners")]
    AmbiguousInterface {
        patch: usize,
        edge: &'static str,
        count: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite gradient at epoch {epoch} (loss {loss})")]
    NonFiniteGradient { epoch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
