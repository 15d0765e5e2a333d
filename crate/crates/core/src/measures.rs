//! Entropy-based uncertainty measures over `T` forward passes.
//!
//! * predictive entropy `H[mean_t p_t]` (total uncertainty),
//! * expected entropy `mean_t H[p_t]` (aleatoric part),
//! * mutual information, their difference (epistemic part).
//!
//! All values are in nats and computed in `f64`.

use serde::{Deserialize, Serialize};

use crate::inference::PredictionSamples;

const CLIP: f64 = 1e-12;

/// `-sum_c p_c ln p_c` with `p` clipped to `[1e-12, 1]` and `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    let s: f64 = p
        .iter()
        .map(|&v| if v <= 0.0 { 0.0 } else { let c = v.clamp(CLIP, 1.0); c * c.ln() })
        .sum();
    0.0 - s
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScores {
    pub predictive_entropy: Vec<f64>,
    pub expected_entropy: Vec<f64>,
    pub mutual_information: Vec<f64>,
    pub predicted_class: Vec<usize>,
    /// `[n][k]` mean over passes.
    pub mean_probs: Vec<Vec<f64>>,
}

pub fn predictive_entropy(samples: &PredictionSamples) -> Vec<f64> {
    (0..samples.trials())
        .map(|n| entropy(&samples.mean_probs(n)))
        .collect()
}

pub fn expected_entropy(samples: &PredictionSamples) -> Vec<f64> {
    let t = samples.passes() as f64;
    (0..samples.trials())
        .map(|n| {
            (0..samples.passes())
                .map(|p| entropy(samples.row(p, n)))
                .sum::<f64>()
                / t
        })
        .collect()
}

pub fn mutual_information(samples: &PredictionSamples) -> Vec<f64> {
    predictive_entropy(samples)
        .into_iter()
        .zip(expected_entropy(samples))
        .map(|(pe, ee)| pe - ee)
        .collect()
}

pub fn classify(samples: &PredictionSamples) -> Vec<usize> {
    (0..samples.trials())
        .map(|n| argmax(&samples.mean_probs(n)))
        .collect()
}

pub fn scores(samples: &PredictionSamples) -> UncertaintyScores {
    let mean_probs: Vec<Vec<f64>> = (0..samples.trials()).map(|n| samples.mean_probs(n)).collect();
    let predictive_entropy: Vec<f64> = mean_probs.iter().map(|p| entropy(p)).collect();
    let expected_entropy = expected_entropy(samples);
    let mutual_information = predictive_entropy
        .iter()
        .zip(&expected_entropy)
        .map(|(a, b)| a - b)
        .collect();
    UncertaintyScores {
        predicted_class: mean_probs.iter().map(|p| argmax(p)).collect(),
        predictive_entropy,
        expected_entropy,
        mutual_information,
        mean_probs,
    }
}
