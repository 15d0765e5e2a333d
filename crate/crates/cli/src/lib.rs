//! Batch front end for uqnet: data generation, training, evaluation and
//! report rendering driven by a single JSON run config.

pub mod commands;
pub mod config;

pub use config::{DataSource, RunConfig};
