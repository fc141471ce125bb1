//! Histogram-binned decision trees shared by the boosted and bagged
//! ensembles: a quantile binner, a gradient/hessian regression tree with
//! leaf-wise growth, and a Gini classification tree.

use ndarray::ArrayView2;

/// Per-feature quantile binning. Bin index b means
/// `thresholds[b-1] < x <= thresholds[b]` with b in `0..=thresholds.len()`.
#[derive(Debug, Clone)]
pub struct Binner {
    /// Per feature: sorted upper-inclusive thresholds (split points).
    pub thresholds: Vec<Vec<f64>>,
}

impl Binner {
    pub fn fit(x: ArrayView2<'_, f64>, max_bins: usize) -> Binner {
        let (n, d) = x.dim();
        let mut thresholds = Vec::with_capacity(d);
        for j in 0..d {
            let mut col: Vec<f64> = (0..n).map(|i| x[[i, j]]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            col.dedup();
            let cuts = if col.len() <= max_bins {
                // Midpoints between adjacent distinct values.
                col.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
            } else {
                // Quantile-spaced cuts.
                let mut cuts = Vec::with_capacity(max_bins - 1);
                for q in 1..max_bins {
                    let idx = q * (col.len() - 1) / max_bins;
                    let cut = (col[idx] + col[idx + 1.min(col.len() - 1 - idx)]) / 2.0;
                    cuts.push(cut);
                }
                cuts.dedup_by(|a, b| a == b);
                cuts
            };
            thresholds.push(cuts);
        }
        Binner { thresholds }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.thresholds[feature].len() + 1
    }

    pub fn bin_value(&self, feature: usize, v: f64) -> u16 {
        let cuts = &self.thresholds[feature];
        // First threshold >= v gives the bin.
        let mut lo = 0usize;
        let mut hi = cuts.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if v <= cuts[mid] {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo as u16
    }

    /// Bin a whole matrix (row-major trials × features).
    pub fn bin_matrix(&self, x: ArrayView2<'_, f64>) -> Vec<Vec<u16>> {
        let (n, d) = x.dim();
        let mut out = vec![vec![0u16; d]; n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = self.bin_value(j, x[[i, j]]);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Regression tree on (gradient, hessian) targets — the boosting weak learner
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Go left when `bin <= split_bin`.
        split_bin: u16,
        /// Raw threshold for unbinned prediction.
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    /// Total split gain accumulated per feature.
    pub feature_gain: Vec<f64>,
}

pub struct GbdtTreeParams {
    pub num_leaves: usize,
    pub min_child_samples: usize,
    pub l2: f64,
}

struct LeafCandidate {
    node_slot: usize,
    indices: Vec<usize>,
    grad_sum: f64,
    hess_sum: f64,
    best: Option<(f64, usize, u16)>, // (gain, feature, bin)
}

impl RegressionTree {
    /// Leaf-wise (best-first) growth to at most `num_leaves` leaves.
    pub fn fit(
        binned: &[Vec<u16>],
        binner: &Binner,
        grad: &[f64],
        hess: &[f64],
        indices: &[usize],
        params: &GbdtTreeParams,
    ) -> RegressionTree {
        let d = binner.thresholds.len();
        let mut tree = RegressionTree {
            nodes: Vec::new(),
            feature_gain: vec![0.0; d],
        };

        let g0: f64 = indices.iter().map(|&i| grad[i]).sum();
        let h0: f64 = indices.iter().map(|&i| hess[i]).sum();
        tree.nodes.push(TreeNode::Leaf {
            value: leaf_value(g0, h0, params.l2),
        });

        let mut candidates = vec![LeafCandidate {
            node_slot: 0,
            indices: indices.to_vec(),
            grad_sum: g0,
            hess_sum: h0,
            best: None,
        }];
        evaluate_candidate(&mut candidates[0], binned, binner, grad, hess, params);

        let mut n_leaves = 1usize;
        while n_leaves < params.num_leaves {
            // Pick the candidate with the largest gain (stable tie-break on
            // node slot order).
            let mut best_idx: Option<usize> = None;
            for (ci, c) in candidates.iter().enumerate() {
                if let Some((gain, _, _)) = c.best {
                    let better = match best_idx {
                        None => true,
                        Some(bi) => gain > candidates[bi].best.unwrap().0 + 1e-15,
                    };
                    if better {
                        best_idx = Some(ci);
                    }
                }
            }
            let Some(ci) = best_idx else { break };
            let cand = candidates.swap_remove(ci);
            let (gain, feature, bin) = cand.best.unwrap();

            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = cand
                .indices
                .iter()
                .partition(|&&i| binned[i][feature] <= bin);

            let gl: f64 = left_idx.iter().map(|&i| grad[i]).sum();
            let hl: f64 = left_idx.iter().map(|&i| hess[i]).sum();
            let gr = cand.grad_sum - gl;
            let hr = cand.hess_sum - hl;

            let left_slot = tree.nodes.len();
            tree.nodes.push(TreeNode::Leaf {
                value: leaf_value(gl, hl, params.l2),
            });
            let right_slot = tree.nodes.len();
            tree.nodes.push(TreeNode::Leaf {
                value: leaf_value(gr, hr, params.l2),
            });
            let threshold = binner.thresholds[feature]
                .get(bin as usize)
                .copied()
                .unwrap_or(f64::INFINITY);
            tree.nodes[cand.node_slot] = TreeNode::Split {
                feature,
                split_bin: bin,
                threshold,
                left: left_slot,
                right: right_slot,
            };
            tree.feature_gain[feature] += gain;
            n_leaves += 1;

            let mut left_cand = LeafCandidate {
                node_slot: left_slot,
                indices: left_idx,
                grad_sum: gl,
                hess_sum: hl,
                best: None,
            };
            evaluate_candidate(&mut left_cand, binned, binner, grad, hess, params);
            candidates.push(left_cand);

            let mut right_cand = LeafCandidate {
                node_slot: right_slot,
                indices: right_idx,
                grad_sum: gr,
                hess_sum: hr,
                best: None,
            };
            evaluate_candidate(&mut right_cand, binned, binner, grad, hess, params);
            candidates.push(right_cand);
        }
        tree
    }

    pub fn predict_binned(&self, row: &[u16]) -> f64 {
        let mut slot = 0usize;
        loop {
            match &self.nodes[slot] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    split_bin,
                    left,
                    right,
                    ..
                } => {
                    slot = if row[*feature] <= *split_bin { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_raw(&self, row: &[f64]) -> f64 {
        let mut slot = 0usize;
        loop {
            match &self.nodes[slot] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    slot = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

fn leaf_value(g: f64, h: f64, l2: f64) -> f64 {
    -g / (h + l2)
}

fn evaluate_candidate(
    cand: &mut LeafCandidate,
    binned: &[Vec<u16>],
    binner: &Binner,
    grad: &[f64],
    hess: &[f64],
    params: &GbdtTreeParams,
) {
    let l2 = params.l2;
    let parent_score = cand.grad_sum * cand.grad_sum / (cand.hess_sum + l2);
    if cand.indices.len() < 2 * params.min_child_samples {
        return;
    }
    let d = binner.thresholds.len();
    let mut best: Option<(f64, usize, u16)> = None;
    for feature in 0..d {
        let n_bins = binner.n_bins(feature);
        if n_bins < 2 {
            continue;
        }
        let mut hist_g = vec![0.0f64; n_bins];
        let mut hist_h = vec![0.0f64; n_bins];
        let mut hist_n = vec![0usize; n_bins];
        for &i in &cand.indices {
            let b = binned[i][feature] as usize;
            hist_g[b] += grad[i];
            hist_h[b] += hess[i];
            hist_n[b] += 1;
        }
        let total_n = cand.indices.len();
        let mut gl = 0.0;
        let mut hl = 0.0;
        let mut nl = 0usize;
        for b in 0..n_bins - 1 {
            gl += hist_g[b];
            hl += hist_h[b];
            nl += hist_n[b];
            let nr = total_n - nl;
            if nl < params.min_child_samples || nr < params.min_child_samples {
                continue;
            }
            let gr = cand.grad_sum - gl;
            let hr = cand.hess_sum - hl;
            let gain = gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent_score;
            if gain > 1e-12 {
                let better = match best {
                    None => true,
                    Some((bg, _, _)) => gain > bg + 1e-15,
                };
                if better {
                    best = Some((gain, feature, b as u16));
                }
            }
        }
    }
    cand.best = best;
}

// ---------------------------------------------------------------------------
// Gini classification tree — the forest weak learner
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum ClsNode {
    Leaf {
        /// Class distribution (sums to 1).
        proba: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct ClassificationTree {
    pub nodes: Vec<ClsNode>,
    pub feature_gain: Vec<f64>,
}

pub struct ForestTreeParams {
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    /// Features tried per split (√D convention when None upstream).
    pub max_features: usize,
    pub n_classes: usize,
}

impl ClassificationTree {
    pub fn fit(
        binned: &[Vec<u16>],
        binner: &Binner,
        labels: &[usize],
        indices: &[usize],
        params: &ForestTreeParams,
        rng: &mut impl rand::Rng,
    ) -> ClassificationTree {
        let d = binner.thresholds.len();
        let mut tree = ClassificationTree {
            nodes: Vec::new(),
            feature_gain: vec![0.0; d],
        };
        tree.nodes.push(ClsNode::Leaf { proba: vec![] });
        tree.grow(0, indices.to_vec(), 0, binned, binner, labels, params, rng);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        slot: usize,
        indices: Vec<usize>,
        depth: usize,
        binned: &[Vec<u16>],
        binner: &Binner,
        labels: &[usize],
        params: &ForestTreeParams,
        rng: &mut impl rand::Rng,
    ) {
        let k = params.n_classes;
        let mut counts = vec![0usize; k];
        for &i in &indices {
            counts[labels[i]] += 1;
        }
        let n = indices.len();
        let make_leaf = |counts: &[usize]| ClsNode::Leaf {
            proba: counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect(),
        };

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = params.max_depth.map(|m| depth >= m).unwrap_or(false);
        if pure || depth_capped || n < 2 * params.min_samples_leaf {
            self.nodes[slot] = make_leaf(&counts);
            return;
        }

        // Sample candidate features without replacement.
        let d = binner.thresholds.len();
        let n_try = params.max_features.clamp(1, d);
        let mut features: Vec<usize> = (0..d).collect();
        // Partial Fisher-Yates for the first n_try entries.
        for i in 0..n_try {
            let j = i + (rng.random::<u64>() as usize) % (d - i);
            features.swap(i, j);
        }
        features.truncate(n_try);
        features.sort_unstable();

        let gini = |counts: &[usize], total: usize| -> f64 {
            if total == 0 {
                return 0.0;
            }
            let t = total as f64;
            1.0 - counts
                .iter()
                .map(|&c| {
                    let p = c as f64 / t;
                    p * p
                })
                .sum::<f64>()
        };
        let parent_impurity = gini(&counts, n);

        let mut best: Option<(f64, usize, u16)> = None;
        for &feature in &features {
            let n_bins = binner.n_bins(feature);
            if n_bins < 2 {
                continue;
            }
            let mut hist = vec![0usize; n_bins * k];
            let mut bin_n = vec![0usize; n_bins];
            for &i in &indices {
                let b = binned[i][feature] as usize;
                hist[b * k + labels[i]] += 1;
                bin_n[b] += 1;
            }
            let mut left_counts = vec![0usize; k];
            let mut nl = 0usize;
            for b in 0..n_bins - 1 {
                for c in 0..k {
                    left_counts[c] += hist[b * k + c];
                }
                nl += bin_n[b];
                let nr = n - nl;
                if nl < params.min_samples_leaf || nr < params.min_samples_leaf {
                    continue;
                }
                let right_counts: Vec<usize> =
                    (0..k).map(|c| counts[c] - left_counts[c]).collect();
                let w_impurity = (nl as f64 * gini(&left_counts, nl)
                    + nr as f64 * gini(&right_counts, nr))
                    / n as f64;
                let gain = parent_impurity - w_impurity;
                if gain > 1e-12 {
                    let better = match best {
                        None => true,
                        Some((bg, _, _)) => gain > bg + 1e-15,
                    };
                    if better {
                        best = Some((gain, feature, b as u16));
                    }
                }
            }
        }

        let Some((gain, feature, bin)) = best else {
            self.nodes[slot] = make_leaf(&counts);
            return;
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| binned[i][feature] <= bin);
        let threshold = binner.thresholds[feature]
            .get(bin as usize)
            .copied()
            .unwrap_or(f64::INFINITY);

        let left_slot = self.nodes.len();
        self.nodes.push(ClsNode::Leaf { proba: vec![] });
        let right_slot = self.nodes.len();
        self.nodes.push(ClsNode::Leaf { proba: vec![] });
        self.nodes[slot] = ClsNode::Split {
            feature,
            threshold,
            left: left_slot,
            right: right_slot,
        };
        self.feature_gain[feature] += gain * n as f64;

        self.grow(left_slot, left_idx, depth + 1, binned, binner, labels, params, rng);
        self.grow(right_slot, right_idx, depth + 1, binned, binner, labels, params, rng);
    }

    pub fn predict_raw(&self, row: &[f64]) -> &[f64] {
        let mut slot = 0usize;
        loop {
            match &self.nodes[slot] {
                ClsNode::Leaf { proba } => return proba,
                ClsNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    slot = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}
