//! Boosting loop for binary cross-entropy with Newton leaf values.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::binning::BinMapper;
use super::tree::{grow, GrowParams, Node, Tree};
use super::{logloss, sigmoid};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_child_weight: f64,
    pub min_data_in_leaf: usize,
    pub lambda_l2: f64,
    pub max_bins: usize,
    /// Stop after this many rounds without validation improvement.
    pub early_stopping_rounds: usize,
    pub feature_fraction: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams::from(&PipelineConfig::default())
    }
}

impl From<&PipelineConfig> for GbdtParams {
    fn from(c: &PipelineConfig) -> Self {
        GbdtParams {
            n_trees: c.n_trees,
            learning_rate: c.learning_rate,
            max_leaves: c.max_leaves,
            min_child_weight: c.min_child_weight,
            min_data_in_leaf: c.min_data_in_leaf,
            lambda_l2: c.lambda_l2,
            max_bins: c.max_bins,
            early_stopping_rounds: c.early_stopping_rounds,
            feature_fraction: c.feature_fraction,
        }
    }
}

/// Gradient and hessian of the logistic loss with respect to the margin.
pub fn logistic_grad_hess(margin: f64, label: u8) -> (f64, f64) {
    let p = sigmoid(margin);
    (p - f64::from(label), p * (1.0 - p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTreeModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub bin_edges: Vec<Vec<f64>>,
    /// Trees with the learning rate already folded into the leaf values.
    pub trees: Vec<Tree>,
}

impl BoostedTreeModel {
    pub fn predict_margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.predict_margin(row))
    }

    /// Total split gain per feature.
    pub fn gain_importance(&self) -> Vec<f64> {
        let mut gains = vec![0.0; self.n_features];
        for t in &self.trees {
            for n in &t.nodes {
                if let Node::Split { feature, gain, .. } = n {
                    gains[*feature as usize] += gain;
                }
            }
        }
        gains
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Training logloss before any tree, then after each kept tree.
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub best_iteration: usize,
}

pub fn fit_gbdt(
    x: &[Vec<f64>],
    y: &[u8],
    params: &GbdtParams,
    seed: u64,
) -> Result<BoostedTreeModel> {
    fit_gbdt_with_report(x, y, None, params, seed).map(|(m, _)| m)
}

/// Fits a boosted model; with a validation set, training stops once validation
/// loss has not improved for `early_stopping_rounds` and the model is cut back
/// to its best iteration.
pub fn fit_gbdt_with_report(
    x: &[Vec<f64>],
    y: &[u8],
    valid: Option<(&[Vec<f64>], &[u8])>,
    params: &GbdtParams,
    seed: u64,
) -> Result<(BoostedTreeModel, FitReport)> {
    let n = x.len();
    let positives = y.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(Error::EmptyClass(1));
    }
    if positives == n {
        return Err(Error::EmptyClass(0));
    }
    let n_features = x[0].len();
    let mappers: Vec<BinMapper> = (0..n_features)
        .map(|f| {
            let col: Vec<f64> = x.iter().map(|r| r[f]).collect();
            BinMapper::fit(&col, params.max_bins)
        })
        .collect();
    let bins: Vec<Vec<u8>> = mappers
        .iter()
        .enumerate()
        .map(|(f, m)| x.iter().map(|r| m.bin(r[f])).collect())
        .collect();
    let n_bins: Vec<usize> = mappers.iter().map(BinMapper::n_bins).collect();
    let edges: Vec<Vec<f64>> = mappers.into_iter().map(|m| m.edges).collect();
    let splittable: Vec<usize> = (0..n_features).filter(|&f| n_bins[f] > 1).collect();

    let prior = positives as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let mut model = BoostedTreeModel {
        base_score,
        learning_rate: params.learning_rate,
        n_features,
        bin_edges: edges,
        trees: Vec::new(),
    };
    let grow_params = GrowParams {
        max_leaves: params.max_leaves.max(2),
        min_child_weight: params.min_child_weight,
        min_data_in_leaf: params.min_data_in_leaf.max(1),
        lambda: params.lambda_l2,
    };

    let mut margins = vec![base_score; n];
    let mut loss = logloss(&margins, y);
    let mut report = FitReport {
        train_loss: vec![loss],
        ..Default::default()
    };
    let mut valid_margins = valid.map(|(vx, _)| vec![base_score; vx.len()]);
    if let (Some((_, vy)), Some(vm)) = (valid, &valid_margins) {
        report.valid_loss.push(logloss(vm, vy));
    }
    let mut best = (
        report.valid_loss.first().copied().unwrap_or(f64::INFINITY),
        0usize,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let all_rows: Vec<u32> = (0..n as u32).collect();

    for _ in 0..params.n_trees {
        if splittable.is_empty() {
            break;
        }
        for i in 0..n {
            (grad[i], hess[i]) = logistic_grad_hess(margins[i], y[i]);
        }
        let features: Vec<usize> = if params.feature_fraction < 1.0 {
            let take = ((splittable.len() as f64 * params.feature_fraction).ceil() as usize).max(1);
            let mut f: Vec<usize> = index::sample(&mut rng, splittable.len(), take)
                .into_iter()
                .map(|i| splittable[i])
                .collect();
            f.sort_unstable();
            f
        } else {
            splittable.clone()
        };
        let (mut tree, membership) = grow(
            all_rows.clone(),
            &bins,
            &n_bins,
            &model.bin_edges,
            &grad,
            &hess,
            &features,
            &grow_params,
        );
        if tree.nodes.len() == 1 {
            break;
        }
        tree.scale_leaves(params.learning_rate);

        // Shrink the step until training loss does not increase.
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial = margins.clone();
            for &(r, node) in &membership {
                if let Node::Leaf { value } = tree.nodes[node] {
                    trial[r as usize] += value;
                }
            }
            let trial_loss = logloss(&trial, y);
            if trial_loss <= loss {
                accepted = Some((trial, trial_loss));
                break;
            }
            tree.scale_leaves(0.5);
        }
        let Some((trial, trial_loss)) = accepted else {
            break;
        };
        margins = trial;
        loss = trial_loss;
        report.train_loss.push(loss);

        if let (Some((vx, vy)), Some(vm)) = (valid, valid_margins.as_mut()) {
            for (m, row) in vm.iter_mut().zip(vx) {
                *m += tree.predict(row);
            }
            let vl = logloss(vm, vy);
            report.valid_loss.push(vl);
            model.trees.push(tree);
            if vl < best.0 {
                best = (vl, model.trees.len());
            } else if model.trees.len() - best.1 >= params.early_stopping_rounds {
                break;
            }
        } else {
            model.trees.push(tree);
        }
    }
    if valid.is_some() {
        model.trees.truncate(best.1);
        report.best_iteration = best.1;
    } else {
        report.best_iteration = model.trees.len();
    }
    Ok((model, report))
}
