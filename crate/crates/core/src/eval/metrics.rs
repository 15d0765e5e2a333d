use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::data("accuracy of an empty prediction set"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::dim(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Midranks (1-based) with ties sharing the average rank.
fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// `P(s_pos > s_neg) + P(s_pos == s_neg) / 2` via the Mann-Whitney U statistic.
pub fn auroc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::dim(format!("{} scores for {} labels", scores.len(), positives.len())));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numeric { index: i, kind: "NaN score" });
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auroc needs both classes ({n_pos} positives, {n_neg} negatives)"
        )));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positives).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let n_pos = n_pos as f64;
    let u = rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg as f64))
}

/// AUROC of `scores` at flagging trials where `predicted != truth`.
pub fn misclassification_auroc(scores: &[f64], predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::dim(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let wrong: Vec<bool> = predicted.iter().zip(truth).map(|(p, t)| p != t).collect();
    auroc(scores, &wrong)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub coverage: f64,
    pub retained: usize,
    pub accuracy: f64,
}

/// Accuracy on the `ceil(q * n)` least-uncertain trials for each coverage `q`.
pub fn rejection_curve(scores: &[f64], correct: &[bool], grid: &[f64]) -> Result<Vec<CurvePoint>> {
    if grid.is_empty() {
        return Err(Error::config("rejection curve needs a non-empty coverage grid"));
    }
    if let Some(q) = grid.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
        return Err(Error::config(format!("coverage {q} outside (0, 1]")));
    }
    if scores.is_empty() || scores.len() != correct.len() {
        return Err(Error::data("rejection curve needs equal, non-empty scores and flags"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut hits = Vec::with_capacity(order.len() + 1);
    hits.push(0usize);
    for &i in &order {
        hits.push(hits[hits.len() - 1] + correct[i] as usize);
    }
    let n = scores.len();
    Ok(grid
        .iter()
        .map(|&q| {
            let keep = ((q * n as f64).ceil() as usize).clamp(1, n);
            CurvePoint {
                coverage: q,
                retained: keep,
                accuracy: hits[keep] as f64 / keep as f64,
            }
        })
        .collect())
}

/// Evenly spaced coverages `1/steps, 2/steps, ..., 1`.
pub fn coverage_grid(steps: usize) -> Vec<f64> {
    (1..=steps).map(|i| i as f64 / steps as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample (n - 1) standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
    /// Set when `n == 1` and `std` carries no information.
    pub single: bool,
}

pub fn aggregate_mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::data("cannot aggregate zero values"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(MeanStd {
        mean,
        std,
        n,
        single: n == 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 0, 0]).unwrap(), 0.5);
        assert_eq!(accuracy(&[1, 1], &[1, 1]).unwrap(), 1.0);
        assert!(matches!(accuracy(&[], &[]), Err(Error::Data(_))));
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn misclassification_all_correct_is_undefined() {
        assert!(matches!(
            misclassification_auroc(&[0.1, 0.2], &[1, 2], &[1, 2]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn rejection_examples() {
        let scores = [0.1, 0.9, 0.2, 0.8];
        let correct = [true, false, true, false];
        let c = rejection_curve(&scores, &correct, &[0.5, 1.0]).unwrap();
        assert_eq!(c[0].retained, 2);
        assert_eq!(c[0].accuracy, 1.0);
        assert_eq!(c[1].accuracy, 0.5);
        assert!(matches!(rejection_curve(&scores, &correct, &[]), Err(Error::Config(_))));
        assert!(rejection_curve(&scores, &correct, &[0.0]).is_err());
    }

    #[test]
    fn mean_std_examples() {
        let a = aggregate_mean_std(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((a.mean, a.std), (1.0, 0.0));
        let b = aggregate_mean_std(&[0.0, 2.0]).unwrap();
        assert!((b.std - 2f64.sqrt()).abs() < 1e-15);
        let c = aggregate_mean_std(&[0.7]).unwrap();
        assert!(c.single && c.std == 0.0);
        assert!(aggregate_mean_std(&[]).is_err());
    }
}
