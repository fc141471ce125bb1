//! Gradient-boosted decision trees: one-vs-all softmax boosting on
//! histogram-binned, leaf-wise trees.
//!
//! Matches the spirit of the usual boosted-tree defaults (500 rounds,
//! 31 leaves, learning rate 0.05, 20 minimum child samples, 255 bins);
//! bit-level parity with any particular library is a non-goal.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

use super::tree::{Binner, GbdtTreeParams, RegressionTree};
use super::ClassifierParams;

#[derive(Debug, Clone)]
pub struct GbdtModel {
    /// `trees[round][class]`.
    trees: Vec<Vec<RegressionTree>>,
    learning_rate: f64,
    n_classes: usize,
    n_features: usize,
    feature_gain: Vec<f64>,
}

pub fn fit_gbdt(x: ArrayView2<'_, f64>, y: &[usize], params: &ClassifierParams) -> Result<GbdtModel> {
    let (n, d) = x.dim();
    let k = y.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    if k < 2 {
        return Err(Error::Invalid("gbdt: single-class training set".into()));
    }

    let binner = Binner::fit(x, params.max_bins);
    let binned = binner.bin_matrix(x);
    let indices: Vec<usize> = (0..n).collect();
    let tree_params = GbdtTreeParams {
        num_leaves: params.num_leaves,
        min_child_samples: params.min_child_samples,
        l2: params.l2,
    };

    // Raw scores per (sample, class).
    let mut scores = vec![0.0f64; n * k];
    let mut trees: Vec<Vec<RegressionTree>> = Vec::with_capacity(params.n_estimators);
    let mut feature_gain = vec![0.0f64; d];

    let mut grad = vec![0.0f64; n];
    let mut hess = vec![0.0f64; n];
    let mut probs = vec![0.0f64; k];

    for _round in 0..params.n_estimators {
        let mut round_trees = Vec::with_capacity(k);
        // Softmax probabilities from the current scores.
        let mut all_probs = vec![0.0f64; n * k];
        for i in 0..n {
            let row = &scores[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..k {
                probs[c] = (row[c] - max).exp();
                sum += probs[c];
            }
            for c in 0..k {
                all_probs[i * k + c] = probs[c] / sum;
            }
        }
        for class in 0..k {
            for i in 0..n {
                let p = all_probs[i * k + class];
                let target = if y[i] == class { 1.0 } else { 0.0 };
                grad[i] = p - target;
                hess[i] = (p * (1.0 - p)).max(1e-6);
            }
            let tree = RegressionTree::fit(&binned, &binner, &grad, &hess, &indices, &tree_params);
            for i in 0..n {
                scores[i * k + class] += params.learning_rate * tree.predict_binned(&binned[i]);
            }
            for (f, g) in tree.feature_gain.iter().enumerate() {
                feature_gain[f] += g;
            }
            round_trees.push(tree);
        }
        trees.push(round_trees);
    }

    Ok(GbdtModel {
        trees,
        learning_rate: params.learning_rate,
        n_classes: k,
        n_features: d,
        feature_gain,
    })
}

impl GbdtModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let (n, _) = x.dim();
        let k = self.n_classes;
        let mut out = Array2::<f64>::zeros((n, k));
        let mut row_buf = vec![0.0f64; x.ncols()];
        for i in 0..n {
            for (j, b) in row_buf.iter_mut().enumerate() {
                *b = x[[i, j]];
            }
            let mut scores = vec![0.0f64; k];
            for round in &self.trees {
                for (c, tree) in round.iter().enumerate() {
                    scores[c] += self.learning_rate * tree.predict_raw(&row_buf);
                }
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                sum += *s;
            }
            for (c, s) in scores.iter().enumerate() {
                out[[i, c]] = s / sum;
            }
        }
        out
    }

    /// Gain-based importances, normalised to unit sum.
    pub fn feature_importance(&self) -> Vec<f64> {
        normalize_gain(&self.feature_gain, self.n_features)
    }
}

pub(super) fn normalize_gain(gain: &[f64], d: usize) -> Vec<f64> {
    let total: f64 = gain.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / d as f64; d];
    }
    gain.iter().map(|g| g / total).collect()
}
