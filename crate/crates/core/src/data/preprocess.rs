use serde::{Deserialize, Serialize};

use crate::data::epochset::EpochSet;
use crate::data::standardize::{exponential_moving_standardize, StandardizeConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Eeg,
    Eog,
}

/// Continuous multichannel recording in volts.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    /// One sample vector per channel, all the same length.
    pub signals: Vec<Vec<f64>>,
    pub channel_names: Vec<String>,
    pub channel_kinds: Vec<ChannelKind>,
    pub sampling_rate: f64,
    pub subject_id: u8,
}

/// A trial whose timing is measured from `start_sample` (trial time t = 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialEvent {
    pub start_sample: usize,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Cue time within a trial, seconds.
    pub cue_s: f64,
    /// Window start relative to the cue, seconds before it.
    pub pre_cue_s: f64,
    /// Trial end within a trial, seconds.
    pub trial_end_s: f64,
    /// Volts to microvolts.
    pub scale: f64,
    pub classes: usize,
    pub standardize: StandardizeConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            cue_s: 2.0,
            pre_cue_s: 0.5,
            trial_end_s: 6.0,
            scale: 1e6,
            classes: 4,
            standardize: StandardizeConfig::default(),
        }
    }
}

impl PreprocessConfig {
    /// `(offset from trial start, window length)` in samples.
    pub fn window(&self, fs: f64) -> (usize, usize) {
        let start = ((self.cue_s - self.pre_cue_s) * fs).round() as usize;
        let len = ((self.trial_end_s - self.cue_s + self.pre_cue_s) * fs).round() as usize;
        (start, len)
    }
}

/// Drops EOG channels, converts to microvolts, standardizes the continuous
/// signal and cuts one epoch per event.
pub fn preprocess(raw: &RawRecording, events: &[TrialEvent], cfg: &PreprocessConfig) -> Result<EpochSet> {
    cfg.standardize.validate()?;
    let n_ch = raw.signals.len();
    if raw.channel_names.len() != n_ch || raw.channel_kinds.len() != n_ch {
        return Err(Error::data("channel names/kinds do not match the signal count"));
    }
    let total = raw.signals.first().map_or(0, Vec::len);
    if raw.signals.iter().any(|s| s.len() != total) {
        return Err(Error::data("channels have different lengths"));
    }
    if events.is_empty() {
        return Err(Error::data("no trial events"));
    }
    if !(raw.sampling_rate > 0.0) {
        return Err(Error::data("sampling rate must be positive"));
    }

    let keep: Vec<usize> = (0..n_ch)
        .filter(|&c| raw.channel_kinds[c] == ChannelKind::Eeg)
        .collect();
    if keep.is_empty() {
        return Err(Error::data("no EEG channels left after dropping EOG"));
    }
    let (offset, len) = cfg.window(raw.sampling_rate);
    for (i, ev) in events.iter().enumerate() {
        let start = ev.start_sample + offset;
        if start + len > total {
            return Err(Error::data(format!(
                "trial {i}: window [{start}, {}) exceeds recording of {total} samples",
                start + len
            )));
        }
        if ev.label as usize >= cfg.classes {
            return Err(Error::data(format!("trial {i}: label {} out of range", ev.label)));
        }
    }

    let standardized: Vec<Vec<f64>> = keep
        .iter()
        .map(|&c| {
            let uv: Vec<f64> = raw.signals[c].iter().map(|v| v * cfg.scale).collect();
            exponential_moving_standardize(&uv, &cfg.standardize)
        })
        .collect();

    let mut data = Vec::with_capacity(events.len() * keep.len() * len);
    for ev in events {
        let start = ev.start_sample + offset;
        for ch in &standardized {
            data.extend(ch[start..start + len].iter().map(|&v| v as f32));
        }
    }
    EpochSet::new(
        Tensor::new(vec![events.len(), keep.len(), len], data)?,
        events.iter().map(|e| e.label).collect(),
        vec![raw.subject_id; events.len()],
        cfg.classes,
        raw.sampling_rate as f32,
        keep.iter().map(|&c| raw.channel_names[c].clone()).collect(),
    )
}
