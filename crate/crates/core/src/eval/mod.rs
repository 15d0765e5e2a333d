//! Leave-one-subject-out harness: splits, metrics, experiments and reports.

pub mod experiment;
pub mod metrics;
pub mod report;
pub mod split;

pub use experiment::*;
pub use metrics::*;
pub use split::{loso_partition, Split, SplitIndices};
