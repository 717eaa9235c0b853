//! Evaluation and learning with multiple inaccurate true targets (MIATTs).
//!
//! * [`labeling`]: partial labelings, MIATTs sets, Boolean assessment and the
//!   logical true target.
//! * [`generate`]: synthetic lane scenes and abductive MIATTs generation.
//! * [`laf`]: logical assessment metrics of a prediction against a MIATTs set.
//! * [`uttl`]: training a classifier directly from a MIATTs set.
//! * [`formats`]: the plain-text file formats shared by the CLI and service.

pub mod compare;
pub mod error;
pub mod formats;
pub mod generate;
pub mod image;
pub mod labeling;
pub mod laf;
pub mod rng;
pub mod uttl;

pub use compare::{agreement_map, AgreementClass, AgreementCounts};
pub use error::{MiattError, Result};
pub use generate::{generate_miatts_abductive, generate_synthetic_scene, inject_conflicts, GenParams, SceneParams};
pub use image::{binarize, Instance, ProbabilityMap};
pub use labeling::{
    assess_miatts, derive_ltt, fact_count, restrict, AssessmentReport, CellState, Conflict, Coverage,
    MiattSet, PartialLabeling,
};
pub use laf::{
    evaluate, logical_assessment_metric_build, logical_consistency_estimate, logical_fact_narrate,
    ConfusionCounts, LafParams, MetricName, MetricSet, Prediction, ZeroDivisionPolicy,
};
pub use rng::SplitMix64;
