//! Gradient-boosted tree classifier, borderline oversampling and the
//! cross-validated ensemble.

pub mod binning;
pub mod ensemble;
pub mod gbdt;
pub mod smote;
pub mod tree;

pub use ensemble::{train_ensemble, CvReport, EnsembleModel, Variant};
pub use gbdt::{
    fit_gbdt, fit_gbdt_with_report, logistic_grad_hess, BoostedTreeModel, FitReport, GbdtParams,
};
pub use smote::{smote_svm, target_minority_count, OversampleConfig, Oversampled};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Row-major feature matrix with names and optional binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Option<u8>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column positions of `wanted` in this dataset.
    pub fn column_positions(&self, wanted: &[String]) -> Result<Vec<usize>> {
        wanted
            .iter()
            .map(|w| {
                self.names
                    .iter()
                    .position(|n| n == w)
                    .ok_or_else(|| Error::ManifestMismatch(format!("missing feature {w:?}")))
            })
            .collect()
    }

    /// Copy restricted to the named columns, in the given order.
    pub fn select(&self, wanted: &[String]) -> Result<Dataset> {
        let pos = self.column_positions(wanted)?;
        Ok(Dataset {
            names: wanted.to_vec(),
            ids: self.ids.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| pos.iter().map(|&i| r[i]).collect())
                .collect(),
            labels: self.labels.clone(),
        })
    }

    /// Rows at `idx`.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Labels as 0/1; errors if any row is unlabelled.
    pub fn require_labels(&self) -> Result<Vec<u8>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.ok_or_else(|| Error::Parse(format!("row {} ({}) has no label", i, self.ids[i])))
            })
            .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of margins against labels.
pub fn logloss(margins: &[f64], labels: &[u8]) -> f64 {
    let n = margins.len().max(1) as f64;
    margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| {
            // log(1 + e^m) - y*m, computed stably
            let softplus = if m > 0.0 {
                m + (-m).exp().ln_1p()
            } else {
                m.exp().ln_1p()
            };
            softplus - f64::from(y) * m
        })
        .sum::<f64>()
        / n
}
