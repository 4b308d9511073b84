//! Multi-seed K-fold ensembles of boosted models and their decision threshold.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbdt::{fit_gbdt_with_report, BoostedTreeModel, GbdtParams};
use super::smote::{smote_svm, OversampleConfig};
use super::{logloss, sigmoid, Dataset};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::is_average_height;
use crate::metrics::{confusion_at, estimate_threshold, mcc, precision_recall};

/// Training scheme.
///
/// * `I`: every feature; per fold 60% train, 20% validation, 20% internal test.
/// * `II`: average-height features dropped; standard K-fold (80/20).
/// * `III`: as `II`, with borderline oversampling of each training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Variant {
    I,
    II,
    III { alpha: f64 },
}

impl Variant {
    pub fn tag(&self) -> String {
        match self {
            Variant::I => "I".into(),
            Variant::II => "II".into(),
            Variant::III { alpha } => format!("III(alpha={alpha})"),
        }
    }

    /// Feature names this variant trains on.
    pub fn select_features(&self, names: &[String]) -> Vec<String> {
        match self {
            Variant::I => names.to_vec(),
            Variant::II | Variant::III { .. } => names
                .iter()
                .filter(|n| !is_average_height(n))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub models: Vec<BoostedTreeModel>,
    pub threshold: f64,
    pub manifest: Vec<String>,
    pub variant: Variant,
    /// Average member margins (true) or member probabilities (false).
    pub average_logits: bool,
}

impl EnsembleModel {
    /// Fault probability for a row already in manifest order.
    pub fn predict_proba_row(&self, row: &[f64]) -> f64 {
        let n = self.models.len() as f64;
        if self.average_logits {
            sigmoid(
                self.models
                    .iter()
                    .map(|m| m.predict_margin(row))
                    .sum::<f64>()
                    / n,
            )
        } else {
            self.models
                .iter()
                .map(|m| m.predict_proba(row))
                .sum::<f64>()
                / n
        }
    }

    /// Probability and decision for a feature vector described by `names`.
    pub fn predict(&self, names: &[String], values: &[f64]) -> Result<(f64, bool)> {
        if names.len() != values.len() {
            return Err(Error::ManifestMismatch(format!(
                "{} names for {} values",
                names.len(),
                values.len()
            )));
        }
        let row = self
            .manifest
            .iter()
            .map(|m| {
                names
                    .iter()
                    .position(|n| n == m)
                    .map(|i| values[i])
                    .ok_or_else(|| Error::ManifestMismatch(format!("missing feature {m:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let p = self.predict_proba_row(&row);
        Ok((p, p >= self.threshold))
    }

    /// Probabilities for every row of `data`.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        let pos = data.column_positions(&self.manifest)?;
        Ok(data
            .rows
            .par_iter()
            .map(|r| {
                let row: Vec<f64> = pos.iter().map(|&i| r[i]).collect();
                self.predict_proba_row(&row)
            })
            .collect())
    }

    /// Total split gain per manifest feature, summed over all members.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut gains = vec![0.0; self.manifest.len()];
        for m in &self.models {
            for (g, v) in gains.iter_mut().zip(m.gain_importance()) {
                *g += v;
            }
        }
        let mut out: Vec<(String, f64)> = self.manifest.iter().cloned().zip(gains).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub seed: usize,
    pub fold: usize,
    pub trees: usize,
    pub train_rows: usize,
    pub synthetic_rows: usize,
    pub valid_logloss: f64,
    /// MCC on the internal test fold (variant I only), at the ensemble threshold.
    pub test_mcc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub variant: String,
    pub alpha: Option<f64>,
    pub n_features: usize,
    pub features: Vec<String>,
    pub members: usize,
    pub threshold: f64,
    pub oof_mcc: f64,
    pub oof_precision: f64,
    pub oof_recall: f64,
    pub member_reports: Vec<MemberReport>,
}

/// Stratified K-fold assignment of row indexes for one seed.
fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    for class in [1u8, 0] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            out[j % folds].push(i);
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

struct Member {
    seed: usize,
    fold: usize,
    model: BoostedTreeModel,
    valid_idx: Vec<usize>,
    test_idx: Vec<usize>,
    report: MemberReport,
}

/// Trains `seeds * folds` members and picks the MCC-optimal threshold on the
/// out-of-fold validation probabilities (each row's margins averaged over seeds).
pub fn train_ensemble(
    data: &Dataset,
    variant: Variant,
    seeds: usize,
    folds: usize,
    cfg: &PipelineConfig,
) -> Result<(EnsembleModel, CvReport)> {
    if folds < 2 || (matches!(variant, Variant::I) && folds < 3) {
        return Err(Error::Config(format!(
            "need at least {} folds for variant {}",
            if matches!(variant, Variant::I) { 3 } else { 2 },
            variant.tag()
        )));
    }
    let manifest = variant.select_features(&data.names);
    let data = data.select(&manifest)?;
    let labels = data.require_labels()?;
    let params = GbdtParams::from(cfg);
    let oversample = match variant {
        Variant::III { alpha } => Some(OversampleConfig {
            alpha,
            ..OversampleConfig::from_config(cfg)
        }),
        _ => None,
    };

    let splits: Vec<Vec<Vec<usize>>> = (0..seeds)
        .map(|s| stratified_folds(&labels, folds, cfg.seed.wrapping_add(s as u64)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..seeds)
        .flat_map(|s| (0..folds).map(move |f| (s, f)))
        .collect();

    let members: Vec<Member> = jobs
        .into_par_iter()
        .map(|(s, f)| {
            let parts = &splits[s];
            let (valid_fold, test_fold) = match variant {
                Variant::I => ((f + 1) % folds, Some(f)),
                _ => (f, None),
            };
            let train_idx: Vec<usize> = (0..folds)
                .filter(|&j| j != valid_fold && Some(j) != test_fold)
                .flat_map(|j| parts[j].iter().copied())
                .collect();
            let member_seed = cfg.seed.wrapping_add((s * folds + f) as u64 * 7919);
            let mut tx: Vec<Vec<f64>> = train_idx.iter().map(|&i| data.rows[i].clone()).collect();
            let mut ty: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
            let mut synthetic = 0;
            if let Some(os) = &oversample {
                let o = smote_svm(&tx, &ty, os, member_seed)?;
                synthetic = o.synthetic_count();
                tx = o.rows;
                ty = o.labels;
            }
            let valid_idx = parts[valid_fold].clone();
            let vx: Vec<Vec<f64>> = valid_idx.iter().map(|&i| data.rows[i].clone()).collect();
            let vy: Vec<u8> = valid_idx.iter().map(|&i| labels[i]).collect();
            let (model, _) =
                fit_gbdt_with_report(&tx, &ty, Some((&vx, &vy)), &params, member_seed)?;
            let vm: Vec<f64> = vx.iter().map(|r| model.predict_margin(r)).collect();
            Ok(Member {
                seed: s,
                fold: f,
                report: MemberReport {
                    seed: s,
                    fold: f,
                    trees: model.trees.len(),
                    train_rows: tx.len(),
                    synthetic_rows: synthetic,
                    valid_logloss: logloss(&vm, &vy),
                    test_mcc: None,
                },
                model,
                valid_idx,
                test_idx: test_fold.map(|t| parts[t].clone()).unwrap_or_default(),
            })
        })
        .collect::<Result<_>>()?;

    // out-of-fold margins, averaged over seeds
    let n = data.len();
    let mut oof = vec![0.0; n];
    let mut hits = vec![0usize; n];
    for m in &members {
        for &i in &m.valid_idx {
            let margin = m.model.predict_margin(&data.rows[i]);
            oof[i] += if cfg.average_logits {
                margin
            } else {
                sigmoid(margin)
            };
            hits[i] += 1;
        }
    }
    let oof_prob: Vec<f64> = oof
        .iter()
        .zip(&hits)
        .map(|(&s, &h)| {
            let v = s / h.max(1) as f64;
            if cfg.average_logits {
                sigmoid(v)
            } else {
                v
            }
        })
        .collect();
    let truth: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
    let (threshold, oof_mcc) = estimate_threshold(&oof_prob, &truth);
    let (oof_precision, oof_recall) = precision_recall(&confusion_at(&oof_prob, &truth, threshold));

    let mut member_reports = Vec::with_capacity(members.len());
    let mut models = Vec::with_capacity(members.len());
    for mut m in members {
        if !m.test_idx.is_empty() {
            let p: Vec<f64> = m
                .test_idx
                .iter()
                .map(|&i| m.model.predict_proba(&data.rows[i]))
                .collect();
            let t: Vec<bool> = m.test_idx.iter().map(|&i| truth[i]).collect();
            m.report.test_mcc = Some(mcc(&confusion_at(&p, &t, threshold)));
        }
        debug_assert_eq!((m.seed, m.fold), (m.report.seed, m.report.fold));
        member_reports.push(m.report);
        models.push(m.model);
    }

    let ensemble = EnsembleModel {
        models,
        threshold,
        manifest: manifest.clone(),
        variant,
        average_logits: cfg.average_logits,
    };
    let report = CvReport {
        variant: variant.tag(),
        alpha: match variant {
            Variant::III { alpha } => Some(alpha),
            _ => None,
        },
        n_features: manifest.len(),
        features: manifest,
        members: ensemble.models.len(),
        threshold,
        oof_mcc,
        oof_precision,
        oof_recall,
        member_reports,
    };
    Ok((ensemble, report))
}
