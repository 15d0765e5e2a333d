//! Uncertainty quantification for a Shallow ConvNet EEG classifier.
//!
//! The crate covers the network core ([`nn`]), stochastic inference and
//! training for each method ([`inference`], [`train`]), entropy-based
//! uncertainty measures ([`measures`]), the leave-one-subject-out harness
//! ([`eval`]) and data ingestion/synthesis ([`data`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod inference;
pub mod measures;
pub mod nn;
pub mod par;
pub mod real;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
