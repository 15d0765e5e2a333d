//! Synthetic multi-subject motor-imagery-like population.
//!
//! Latent sources are sinusoids at distinct frequencies in the 8-30 Hz band
//! with uniform random phase. Each class boosts the amplitude of its own
//! subset of sources, so classes differ in band power. Every subject mixes the
//! sources into electrodes through a shared base matrix plus a subject
//! specific Gaussian perturbation; observation noise is added on top.

use serde::{Deserialize, Serialize};

use crate::data::epochset::EpochSet;
use crate::error::{Error, Result};
use crate::rng::{self, derive_tagged};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub subjects: usize,
    pub trials_per_class: usize,
    pub channels: usize,
    pub timesteps: usize,
    pub classes: usize,
    /// Latent sources; defaults to twice the class count when 0.
    pub sources: usize,
    pub sampling_rate: f64,
    /// Std of the per-subject mixing perturbation (epistemic shift knob).
    pub mixing_perturbation: f64,
    /// Std of additive observation noise (aleatoric knob).
    pub noise: f64,
    /// Amplitude gain of the class-specific sources.
    pub class_contrast: f64,
    /// Log-normal per-trial amplitude jitter.
    pub amplitude_jitter: f64,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            subjects: 9,
            trials_per_class: 72,
            channels: 22,
            timesteps: 1125,
            classes: 4,
            sources: 0,
            sampling_rate: 250.0,
            mixing_perturbation: 0.5,
            noise: 0.5,
            class_contrast: 1.0,
            amplitude_jitter: 0.0,
            seed: 0,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0
            || self.trials_per_class == 0
            || self.channels == 0
            || self.timesteps == 0
            || self.classes == 0
        {
            return Err(Error::config("population counts must all be >= 1"));
        }
        if self.subjects > 256 || self.classes > 256 {
            return Err(Error::config("subject and class ids must fit in a byte"));
        }
        if self.mixing_perturbation < 0.0 || self.noise < 0.0 || self.amplitude_jitter < 0.0 {
            return Err(Error::config("noise scales must be >= 0"));
        }
        if !(self.sampling_rate > 0.0) {
            return Err(Error::config("sampling rate must be > 0"));
        }
        Ok(())
    }

    pub fn source_count(&self) -> usize {
        if self.sources == 0 {
            2 * self.classes
        } else {
            self.sources
        }
    }

    /// Source frequencies spread evenly across 8-30 Hz.
    pub fn frequencies(&self) -> Vec<f64> {
        let p = self.source_count();
        (0..p).map(|i| 8.0 + 22.0 * (i as f64 + 0.5) / p as f64).collect()
    }

    /// `[class][source]` amplitudes: class `k` boosts every source with
    /// `source % classes == k`.
    pub fn amplitudes(&self) -> Vec<Vec<f64>> {
        let p = self.source_count();
        (0..self.classes)
            .map(|k| {
                (0..p)
                    .map(|s| if s % self.classes == k { 1.0 + self.class_contrast } else { 1.0 })
                    .collect()
            })
            .collect()
    }
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    (0..rows * cols).map(|_| scale * rng::normal(&mut r)).collect()
}

pub fn synthesize_population(cfg: &PopulationConfig) -> Result<EpochSet> {
    cfg.validate()?;
    let (c, s, k) = (cfg.channels, cfg.timesteps, cfg.classes);
    let p = cfg.source_count();
    let freqs = cfg.frequencies();
    let amps = cfg.amplitudes();
    let norm = 1.0 / (p as f64).sqrt();
    let base = gaussian_matrix(c, p, norm, derive_tagged(cfg.seed, "base-mixing", 0));
    let dt = 1.0 / cfg.sampling_rate;

    let n = cfg.subjects * k * cfg.trials_per_class;
    let mut data = Vec::with_capacity(n * c * s);
    let mut labels = Vec::with_capacity(n);
    let mut subject_ids = Vec::with_capacity(n);
    let mut src = vec![0.0; p * s];

    for subj in 0..cfg.subjects {
        let pert = gaussian_matrix(
            c,
            p,
            cfg.mixing_perturbation * norm,
            derive_tagged(cfg.seed, "subject-mixing", subj as u64),
        );
        let mixing: Vec<f64> = base.iter().zip(&pert).map(|(a, b)| a + b).collect();
        let mut r = rng::seeded(derive_tagged(cfg.seed, "trials", subj as u64));
        for trial in 0..k * cfg.trials_per_class {
            // classes interleaved
            let class = trial % k;
            for q in 0..p {
                let phase = 2.0 * std::f64::consts::PI * rng::uniform(&mut r);
                let jitter = (cfg.amplitude_jitter * rng::normal(&mut r)).exp();
                let a = amps[class][q] * jitter;
                let w = 2.0 * std::f64::consts::PI * freqs[q];
                for (t, v) in src[q * s..(q + 1) * s].iter_mut().enumerate() {
                    *v = a * (w * t as f64 * dt + phase).sin();
                }
            }
            for ch in 0..c {
                let row = &mixing[ch * p..(ch + 1) * p];
                for t in 0..s {
                    let mut v = 0.0;
                    for q in 0..p {
                        v += row[q] * src[q * s + t];
                    }
                    if cfg.noise > 0.0 {
                        v += cfg.noise * rng::normal(&mut r);
                    }
                    data.push(v as f32);
                }
            }
            labels.push(class as u8);
            subject_ids.push(subj as u8);
        }
    }
    EpochSet::new(
        Tensor::new(vec![n, c, s], data)?,
        labels,
        subject_ids,
        k,
        cfg.sampling_rate as f32,
        (0..c).map(|i| format!("E{}", i + 1)).collect(),
    )
}
