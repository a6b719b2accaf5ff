use serde::{Deserialize, Serialize};

use crate::error::{HgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Auroc,
    Mae,
}

impl Metric {
    /// Whether larger values are better.
    pub fn higher_is_better(&self) -> bool {
        !matches!(self, Metric::Mae)
    }

    pub fn improves(&self, candidate: f64, incumbent: f64) -> bool {
        if self.higher_is_better() {
            candidate > incumbent
        } else {
            candidate < incumbent
        }
    }

    pub fn worst(&self) -> f64 {
        if self.higher_is_better() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Metric::Accuracy => "accuracy",
            Metric::Auroc => "auroc",
            Metric::Mae => "mae",
        };
        f.write_str(s)
    }
}

/// Fraction of rows whose argmax matches the label. `logits` is row-major
/// n x C; the i-th row pairs with `labels[i]`.
pub fn accuracy(logits: &[f64], num_classes: usize, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(HgError::EmptyMask);
    }
    debug_assert_eq!(logits.len(), labels.len() * num_classes);
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits[i * num_classes..(i + 1) * num_classes];
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Mean absolute error of one prediction per row.
pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(HgError::EmptyMask);
    }
    debug_assert_eq!(preds.len(), targets.len());
    let total: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(total / preds.len() as f64)
}

/// Rank-based two-class AUROC with average ranks for ties.
/// `scores[i]` is the model's score for the positive class on row i.
pub fn auroc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.is_empty() {
        return Err(HgError::EmptyMask);
    }
    debug_assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(HgError::data(
            "auroc needs both classes present".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // average ranks over tied score groups (1-based)
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 1)
        .map(|(i, _)| ranks[i])
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Mean and sample standard deviation; a single value has std 0 by
/// definition.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, var.sqrt())
}
