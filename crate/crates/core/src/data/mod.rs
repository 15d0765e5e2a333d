//! Epoch ingestion, preprocessing and the synthetic population generator.

pub mod epochset;
pub mod preprocess;
pub mod standardize;
pub mod synth;

pub use epochset::{load_epochset, save_epochset, EpochSet, RecordingHeader};
pub use preprocess::{preprocess, ChannelKind, PreprocessConfig, RawRecording, TrialEvent};
pub use standardize::{exponential_moving_standardize, StandardizeConfig};
pub use synth::{synthesize_population, PopulationConfig};
