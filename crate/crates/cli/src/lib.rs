//! Command-line pipeline over run directories: data and MIATTs generation,
//! assessment, evaluation, training, reports and comparison overlays.

pub mod cli;
pub mod history;
pub mod manifest;
pub mod pipeline;
pub mod report;
