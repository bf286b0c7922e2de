//! Error type shared by every module of the crate.
//!
//! All fallible operations return [`Result`]; panics are reserved for plain
//! index bugs (e.g. `Matrix::get` out of range), never for data-dependent
//! failures such as an indefinite covariance or a malformed case file.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the estimation stack.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix expected to be symmetric positive definite was not, even
    /// after the bounded jitter repair.
    #[error("matrix not symmetric positive definite: {context}")]
    NotSpd { context: String },

    /// An iterative routine hit its iteration cap without meeting its
    /// convergence tolerance.
    #[error("no convergence: {context}")]
    NonConvergence { context: String },

    /// Two operands (or a series and its expected length) disagree in shape.
    #[error("length mismatch: {context}")]
    LengthMismatch { context: String },

    /// A least-squares normal matrix was singular at the linearization point.
    #[error("rank-deficient system: {context}")]
    RankDeficient { context: String },

    /// A state, weight, or residual became NaN/infinite, or exceeded the
    /// divergence guard threshold.
    #[error("non-finite value: {context}")]
    NonFinite { context: String },

    /// A configuration or model parameter is outside its documented domain.
    #[error("invalid parameter: {context}")]
    InvalidParam { context: String },

    /// Two graph nodes share an id.
    #[error("duplicate node id `{id}`")]
    DuplicateNodeId { id: String },

    /// An edge references a node id that is not part of the graph.
    #[error("edge {edge} references unknown node `{id}`")]
    DanglingEdge { edge: usize, id: String },

    /// An edge selector or target index exceeds the node's state dimension.
    #[error("selector index {index} out of range for node `{node}` (dim {dim})")]
    SelectorOutOfRange {
        node: String,
        index: usize,
        dim: usize,
    },

    /// The global register has no entry for a node (not initialized).
    #[error("no register entry for node `{node}`")]
    MissingRegisterEntry { node: String },

    /// A sub-graph embedding could not rebind an interface edge.
    #[error("boundary mismatch: {context}")]
    BoundaryMismatch { context: String },

    /// A filtering node had no measurement row for a step that required one.
    #[error("missing measurement for node `{node}` at step {step}")]
    MissingMeasurement { node: String, step: usize },

    /// A statistic or fit was requested on fewer samples than it needs.
    #[error("too few samples: need {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    /// A text input (e.g. a grid case file) could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    /// Shorthand for [`Error::InvalidParam`] with a formatted context.
    pub fn invalid(context: impl Into<String>) -> Self {
        Error::InvalidParam {
            context: context.into(),
        }
    }

    /// Shorthand for [`Error::LengthMismatch`] with a formatted context.
    pub fn length(context: impl Into<String>) -> Self {
        Error::LengthMismatch {
            context: context.into(),
        }
    }
}
