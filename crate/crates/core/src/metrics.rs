//! Confusion counts, MCC, precision/recall and threshold sweeps over frames.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(truth: &[bool], predicted: &[bool]) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    c
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
///
/// The numerator and the product under the root are formed in exact integer
/// arithmetic; only the final root and division are floating point.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as i128, c.fp as i128, c.tn as i128, c.fn_ as i128);
    let den = [(tp + fp), (tp + fn_), (tn + fp), (tn + fn_)];
    if den.contains(&0) {
        return 0.0;
    }
    let num = tp * tn - fp * fn_;
    let prod: u128 = den.iter().map(|&d| d as u128).product();
    let v = num as f64 / (prod as f64).sqrt();
    v.clamp(-1.0, 1.0)
}

/// `(precision, recall)`, each -1 when its denominator is zero.
pub fn precision_recall(c: &ConfusionCounts) -> (f64, f64) {
    let ratio = |a: u64, b: u64| if b == 0 { -1.0 } else { a as f64 / b as f64 };
    (ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
}

pub fn confusion_at(probabilities: &[f64], labels: &[bool], threshold: f64) -> ConfusionCounts {
    let pred: Vec<bool> = probabilities.iter().map(|&p| p >= threshold).collect();
    confusion(labels, &pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub mcc: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub best_threshold: f64,
    pub best_mcc: f64,
}

/// Metrics at `lo, lo + step, ..., hi` (inclusive within rounding).
pub fn threshold_sweep(
    probabilities: &[f64],
    labels: &[bool],
    lo: f64,
    hi: f64,
    step: f64,
) -> Sweep {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let thresholds: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    let rows: Vec<SweepRow> = thresholds
        .iter()
        .map(|&t| {
            let c = confusion_at(probabilities, labels, t);
            let (precision, recall) = precision_recall(&c);
            SweepRow {
                threshold: t,
                mcc: mcc(&c),
                precision,
                recall,
            }
        })
        .collect();
    let (best_threshold, best_mcc) = best_of(&rows);
    Sweep {
        rows,
        best_threshold,
        best_mcc,
    }
}

/// Highest-MCC threshold; among ties, the median one (centre of a plateau).
fn best_of(rows: &[SweepRow]) -> (f64, f64) {
    let best = rows.iter().map(|r| r.mcc).fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<f64> = rows
        .iter()
        .filter(|r| r.mcc == best)
        .map(|r| r.threshold)
        .collect();
    if ties.is_empty() {
        return (0.5, 0.0);
    }
    (ties[ties.len() / 2], best)
}

/// Decision threshold maximizing MCC on a 0.001 grid over (0, 1).
pub fn estimate_threshold(probabilities: &[f64], labels: &[bool]) -> (f64, f64) {
    let s = threshold_sweep(probabilities, labels, 0.001, 0.999, 0.001);
    (s.best_threshold, s.best_mcc)
}
