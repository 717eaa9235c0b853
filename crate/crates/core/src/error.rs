use thiserror::Error;

use crate::labeling::AssessmentReport;

/// Errors raised by the labeling, generation, evaluation and learning layers.
#[derive(Debug, Error)]
pub enum MiattError {
    #[error("shape mismatch: expected {expected_width}x{expected_height}, found {found_width}x{found_height}")]
    ShapeMismatch {
        expected_width: usize,
        expected_height: usize,
        found_width: usize,
        found_height: usize,
    },

    #[error("a MIATTs set needs at least one target")]
    EmptySet,

    #[error("MIATTs assessment failed (N={n}, consistent={consistent}, conflicts={conflicts})",
        n = .0.partial_flags.len(), consistent = .0.consistent, conflicts = .0.conflicts.len())]
    AssessmentFailed(Box<AssessmentReport>),

    #[error("degenerate scene: lane covers {object_pixels} of {total_pixels} pixels")]
    DegenerateScene {
        object_pixels: usize,
        total_pixels: usize,
    },

    #[error("collective coverage {required} facts cannot be reached with strictly partial targets")]
    InfeasibleCoverage { required: usize },

    #[error("no pixel is determined by two or more targets")]
    NoOverlap,

    #[error("prediction contains undetermined cells at {count} pixels")]
    IndeterminatePrediction { count: usize },

    #[error("target {target} asserts no facts")]
    EmptyFacts { target: usize },

    #[error("alpha weights do not match the MIATTs set: {0}")]
    WeightMismatch(String),

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, MiattError>;
