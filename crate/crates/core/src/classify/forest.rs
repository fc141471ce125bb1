//! Random forest: bootstrap-bagged Gini trees with √D feature sampling per
//! split. Per-tree seeds derive from the tree position, so training is
//! thread-count invariant.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_for;

use super::tree::{Binner, ClassificationTree, ForestTreeParams};
use super::ClassifierParams;

#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<ClassificationTree>,
    n_classes: usize,
    n_features: usize,
    feature_gain: Vec<f64>,
}

pub fn fit_forest(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    params: &ClassifierParams,
    seed: u64,
) -> Result<ForestModel> {
    let (n, d) = x.dim();
    let k = y.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    if k < 2 {
        return Err(Error::Invalid("forest: single-class training set".into()));
    }
    let binner = Binner::fit(x, params.max_bins);
    let binned = binner.bin_matrix(x);
    let max_features = (d as f64).sqrt().round().max(1.0) as usize;
    let tree_params = ForestTreeParams {
        min_samples_leaf: params.min_samples_leaf,
        max_depth: params.max_depth,
        max_features,
        n_classes: k,
    };

    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut feature_gain = vec![0.0f64; d];
    for t in 0..params.n_estimators {
        let mut rng = rng_for(seed, "rf-tree", t as u64);
        let indices: Vec<usize> = (0..n)
            .map(|_| (rng.random::<u64>() as usize) % n)
            .collect();
        let tree = ClassificationTree::fit(&binned, &binner, y, &indices, &tree_params, &mut rng);
        for (f, g) in tree.feature_gain.iter().enumerate() {
            feature_gain[f] += g;
        }
        trees.push(tree);
    }

    Ok(ForestModel {
        trees,
        n_classes: k,
        n_features: d,
        feature_gain,
    })
}

impl ForestModel {
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
            for tree in &self.trees {
                let p = tree.predict_raw(&row_buf);
                for c in 0..k.min(p.len()) {
                    out[[i, c]] += p[c];
                }
            }
            let sum: f64 = out.row(i).sum();
            if sum > 0.0 {
                for c in 0..k {
                    out[[i, c]] /= sum;
                }
            } else {
                for c in 0..k {
                    out[[i, c]] = 1.0 / k as f64;
                }
            }
        }
        out
    }

    pub fn feature_importance(&self) -> Vec<f64> {
        super::gbdt::normalize_gain(&self.feature_gain, self.n_features)
    }
}
