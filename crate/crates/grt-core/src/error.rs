use thiserror::Error;

use crate::identifiability::DofReport;

/// Errors produced by model construction, transformation, and fitting.
#[derive(Error, Debug, Clone)]
pub enum GrtError {
    #[error("covariance matrix for {context} is not positive definite (sxx={sxx}, sxy={sxy}, syy={syy})")]
    NotPositiveDefinite {
        context: String,
        sxx: f64,
        sxy: f64,
        syy: f64,
    },

    #[error("non-finite parameter in {context}")]
    NonFinite { context: String },

    #[error("decision bounds are parallel or nearly parallel ({context}); the response regions degenerate")]
    DegenerateAngle { context: String },

    #[error("bounds on the {dimension} dimension are not mutually parallel; such models produce uninterpretable response regions")]
    NonParallelBounds { dimension: &'static str },

    #[error("bounds on the {dimension} dimension are not strictly ordered by intercept")]
    UnorderedBounds { dimension: &'static str },

    #[error("invalid {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: String,
        expected: String,
        got: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("transform precondition failed: {0}")]
    TransformPrecondition(String),

    #[error("affine transform is singular (|det| = {det})")]
    SingularTransform { det: f64 },

    #[error("subject index {index} out of range (model has {count} subjects)")]
    SubjectIndex { index: usize, count: usize },

    #[error("model is not identifiable under the given constraint scheme: {reason}")]
    NotIdentifiable { reason: String, report: Box<DofReport> },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GrtError>;
