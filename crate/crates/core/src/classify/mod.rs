//! Classical classifiers behind one fit / predict-probability contract:
//! gradient-boosted trees, random forest, shrinkage LDA, multinomial
//! logistic regression, and a linear SVM, plus soft-vote and stacking
//! combiners. Every model is deterministic given `(spec, data)` and its
//! probability rows sum to one.

mod forest;
mod gbdt;
mod linear;
mod tree;

pub use forest::ForestModel;
pub use gbdt::GbdtModel;
pub use linear::{lbfgs, LdaModel, LinearSvmModel, LogisticModel};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Gbdt,
    RandomForest,
    LdaShrinkage,
    LinearSvm,
    Logistic,
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ClassifierKind::Gbdt => "gbdt",
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::LdaShrinkage => "lda_shrinkage",
            ClassifierKind::LinearSvm => "linear_svm",
            ClassifierKind::Logistic => "logistic",
        };
        f.write_str(s)
    }
}

/// Hyperparameters; every kind reads the fields it needs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierParams {
    /// Boosting rounds / forest size.
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub min_child_samples: usize,
    pub max_bins: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub l2: f64,
    /// LDA shrinkage; `None` selects it analytically.
    pub lda_gamma: Option<f64>,
    pub max_iter: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            n_estimators: 500,
            learning_rate: 0.05,
            num_leaves: 31,
            min_child_samples: 20,
            max_bins: 255,
            min_samples_leaf: 5,
            max_depth: None,
            l2: 1e-3,
            lda_gamma: None,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub seed: u64,
    pub params: ClassifierParams,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind, seed: u64) -> Self {
        ClassifierSpec {
            kind,
            seed,
            params: ClassifierParams::default(),
        }
    }
}

/// A fitted model.
#[derive(Debug, Clone)]
pub enum Model {
    Gbdt(GbdtModel),
    Forest(ForestModel),
    Lda(LdaModel),
    Svm(LinearSvmModel),
    Logistic(LogisticModel),
}

/// Validate the shared preconditions and fit the requested kind.
pub fn fit(spec: &ClassifierSpec, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<Model> {
    let (n, _) = x.dim();
    if n != y.len() {
        return Err(Error::Shape(format!("fit: {n} rows but {} labels", y.len())));
    }
    if n == 0 {
        return Err(Error::Empty("fit: empty training set".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("fit: non-finite feature values".into()));
    }
    let k = y.iter().copied().max().unwrap() + 1;
    for c in 0..k {
        if !y.contains(&c) {
            return Err(Error::Invalid(format!(
                "fit: class ids must be contiguous 0..{k}, {c} is absent"
            )));
        }
    }
    if k < 2 {
        return Err(Error::Invalid("fit: single-class training set".into()));
    }
    if n < k {
        return Err(Error::Invalid(format!("fit: {n} trials < {k} classes")));
    }

    Ok(match spec.kind {
        ClassifierKind::Gbdt => Model::Gbdt(gbdt::fit_gbdt(x, y, &spec.params)?),
        ClassifierKind::RandomForest => {
            Model::Forest(forest::fit_forest(x, y, &spec.params, spec.seed)?)
        }
        ClassifierKind::LdaShrinkage => Model::Lda(linear::fit_lda(x, y, spec.params.lda_gamma)?),
        ClassifierKind::LinearSvm => Model::Svm(linear::fit_linear_svm(x, y, &spec.params)?),
        ClassifierKind::Logistic => Model::Logistic(linear::fit_logistic(x, y, &spec.params)?),
    })
}

impl Model {
    pub fn n_classes(&self) -> usize {
        match self {
            Model::Gbdt(m) => m.n_classes(),
            Model::Forest(m) => m.n_classes(),
            Model::Lda(m) => m.n_classes(),
            Model::Svm(m) => m.n_classes(),
            Model::Logistic(m) => m.n_classes(),
        }
    }

    /// Per-class probability rows (each sums to 1).
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        match self {
            Model::Gbdt(m) => m.predict_proba(x),
            Model::Forest(m) => m.predict_proba(x),
            Model::Lda(m) => m.predict_proba(x),
            Model::Svm(m) => m.predict_proba(x),
            Model::Logistic(m) => m.predict_proba(x),
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        argmax_rows(&self.predict_proba(x))
    }
}

/// Argmax per row with ties broken toward the lowest class index.
pub fn argmax_rows(proba: &Array2<f64>) -> Vec<usize> {
    proba
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Gain- or weight-based per-feature importances, normalised to unit sum.
pub fn feature_importance(model: &Model) -> Result<Vec<f64>> {
    let imp = match model {
        Model::Gbdt(m) => m.feature_importance(),
        Model::Forest(m) => m.feature_importance(),
        Model::Lda(m) => m.feature_importance(),
        Model::Svm(m) => m.feature_importance(),
        Model::Logistic(m) => m.feature_importance(),
    };
    Ok(imp)
}

// ---------------------------------------------------------------------------
// Ensemble combiners
// ---------------------------------------------------------------------------

/// Elementwise mean of probability row sets, renormalised per row.
pub fn soft_vote(probas: &[Array2<f64>]) -> Result<Array2<f64>> {
    let first = probas
        .first()
        .ok_or_else(|| Error::Empty("soft_vote: no inputs".into()))?;
    let shape = first.dim();
    for p in probas {
        if p.dim() != shape {
            return Err(Error::Shape(format!(
                "soft_vote: shape mismatch {:?} vs {shape:?}",
                p.dim()
            )));
        }
    }
    let mut out = Array2::<f64>::zeros(shape);
    for p in probas {
        out += p;
    }
    out /= probas.len() as f64;
    for mut row in out.rows_mut() {
        let sum: f64 = row.sum();
        if sum > 0.0 {
            row.mapv_inplace(|v| v / sum);
        }
    }
    Ok(out)
}

/// A stacking ensemble: out-of-fold base probabilities feed a meta-learner.
#[derive(Debug, Clone)]
pub struct StackingModel {
    pub bases: Vec<Model>,
    pub meta: Box<Model>,
    pub n_classes: usize,
}

/// Fit a stacking ensemble.
///
/// Meta-features are out-of-fold base probabilities from a seeded,
/// class-stratified `inner_k`-fold split of the training data
/// (trials × bases·K). The meta-learner trains on those; the bases are then
/// refitted on the full training data for prediction time.
pub fn stacking(
    base_specs: &[ClassifierSpec],
    meta_spec: &ClassifierSpec,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    inner_k: usize,
) -> Result<StackingModel> {
    if base_specs.is_empty() {
        return Err(Error::Empty("stacking: no base specs".into()));
    }
    if inner_k < 2 {
        return Err(Error::Invalid("stacking: inner_k must be >= 2".into()));
    }
    let n = x.nrows();
    let k = y.iter().copied().max().map(|m| m + 1).unwrap_or(0);

    let folds = stratified_folds(y, inner_k, meta_spec.seed)?;

    let mut meta_x = Array2::<f64>::zeros((n, base_specs.len() * k));
    for (fold_idx, test_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = (0..n).filter(|i| !test_idx.contains(i)).collect();
        let train_y: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
        for c in 0..k {
            if !train_y.contains(&c) {
                return Err(Error::Invalid(format!(
                    "stacking: class {c} missing from inner fold {fold_idx} training side"
                )));
            }
        }
        let train_x = select_rows(x, &train_idx);
        let test_x = select_rows(x, test_idx);
        for (b, spec) in base_specs.iter().enumerate() {
            let model = fit(spec, train_x.view(), &train_y)?;
            let p = model.predict_proba(test_x.view());
            for (row_local, &row_global) in test_idx.iter().enumerate() {
                for c in 0..k {
                    meta_x[[row_global, b * k + c]] = p[[row_local, c]];
                }
            }
        }
    }

    let meta = fit(meta_spec, meta_x.view(), y)?;
    let bases: Vec<Model> = base_specs
        .iter()
        .map(|spec| fit(spec, x, y))
        .collect::<Result<_>>()?;

    Ok(StackingModel {
        bases,
        meta: Box::new(meta),
        n_classes: k,
    })
}

impl StackingModel {
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let n = x.nrows();
        let k = self.n_classes;
        let mut meta_x = Array2::<f64>::zeros((n, self.bases.len() * k));
        for (b, base) in self.bases.iter().enumerate() {
            let p = base.predict_proba(x);
            for i in 0..n {
                for c in 0..k {
                    meta_x[[i, b * k + c]] = p[[i, c]];
                }
            }
        }
        self.meta.predict_proba(meta_x.view())
    }
}

/// Seeded class-stratified fold assignment: shuffle within class, then
/// round-robin across folds. Returns per-fold test indices (sorted).
pub fn stratified_folds(y: &[usize], k_folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    use rand::seq::SliceRandom;
    let k = y.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k_folds];
    for class in 0..k {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        let mut rng = rng_for(seed, "stratified-folds", class as u64);
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            folds[pos % k_folds].push(idx);
        }
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

pub(crate) fn select_rows(x: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    let d = x.ncols();
    let mut out = Array2::<f64>::zeros((idx.len(), d));
    for (new, &old) in idx.iter().enumerate() {
        out.row_mut(new).assign(&x.row(old));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// K well-separated Gaussian blobs in `dim` dimensions.
    fn blobs(k: usize, n_per: usize, dim: usize, sigma: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = crate::rng::rng_for(seed, "clf-blobs", 0);
        let n = k * n_per;
        let mut x = Array2::<f64>::zeros((n, dim));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % k;
            for j in 0..dim {
                let centre = if j == class % dim { 3.0 * (class / dim + 1) as f64 } else { 0.0 };
                let u: f64 = rng.random();
                let w: f64 = rng.random();
                let z = (-2.0 * u.max(1e-12).ln()).sqrt()
                    * (2.0 * std::f64::consts::PI * w).cos();
                x[[i, j]] = centre + sigma * z;
            }
            y.push(class);
        }
        (x, y)
    }

    #[test]
    fn default_params_match_reference_settings() {
        let p = ClassifierParams::default();
        assert_eq!(p.n_estimators, 500);
        assert_eq!(p.learning_rate, 0.05);
        assert_eq!(p.min_child_samples, 20);
        assert_eq!(p.num_leaves, 31);
        assert_eq!(p.max_bins, 255);
        assert_eq!(p.min_samples_leaf, 5);
        assert_eq!(p.max_depth, None);
    }

    fn small_spec(kind: ClassifierKind) -> ClassifierSpec {
        let mut spec = ClassifierSpec::new(kind, 42);
        spec.params.n_estimators = 30;
        spec
    }

    #[test]
    fn all_kinds_fit_separable_blobs() {
        let (x, y) = blobs(3, 30, 4, 0.2, 10);
        for kind in [
            ClassifierKind::Gbdt,
            ClassifierKind::RandomForest,
            ClassifierKind::LdaShrinkage,
            ClassifierKind::LinearSvm,
            ClassifierKind::Logistic,
        ] {
            let model = fit(&small_spec(kind), x.view(), &y).unwrap();
            let pred = model.predict(x.view());
            let acc = pred.iter().zip(y.iter()).filter(|(a, b)| a == b).count() as f64
                / y.len() as f64;
            assert!(acc > 0.95, "{kind} train accuracy {acc}");
        }
    }

    #[test]
    fn probability_rows_sum_to_one() {
        let (x, y) = blobs(3, 20, 4, 0.5, 11);
        for kind in [
            ClassifierKind::Gbdt,
            ClassifierKind::RandomForest,
            ClassifierKind::LdaShrinkage,
            ClassifierKind::LinearSvm,
            ClassifierKind::Logistic,
        ] {
            let model = fit(&small_spec(kind), x.view(), &y).unwrap();
            let p = model.predict_proba(x.view());
            for row in p.rows() {
                let sum: f64 = row.sum();
                assert!((sum - 1.0).abs() < 1e-9, "{kind} row sum {sum}");
                assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn fit_is_deterministic_given_seed() {
        let (x, y) = blobs(3, 20, 4, 0.5, 12);
        for kind in [ClassifierKind::Gbdt, ClassifierKind::RandomForest] {
            let a = fit(&small_spec(kind), x.view(), &y).unwrap().predict_proba(x.view());
            let b = fit(&small_spec(kind), x.view(), &y).unwrap().predict_proba(x.view());
            assert_eq!(a, b, "{kind} not deterministic");
        }
    }

    #[test]
    fn label_permutation_permutes_probability_columns() {
        let (x, y) = blobs(3, 20, 4, 0.5, 13);
        // Permutation σ: 0→2, 1→0, 2→1.
        let sigma = [2usize, 0, 1];
        let y_perm: Vec<usize> = y.iter().map(|&l| sigma[l]).collect();
        for kind in [
            ClassifierKind::RandomForest,
            ClassifierKind::LdaShrinkage,
            ClassifierKind::Gbdt,
        ] {
            let p = fit(&small_spec(kind), x.view(), &y).unwrap().predict_proba(x.view());
            let pp = fit(&small_spec(kind), x.view(), &y_perm)
                .unwrap()
                .predict_proba(x.view());
            for i in 0..x.nrows() {
                for c in 0..3 {
                    let diff = (p[[i, c]] - pp[[i, sigma[c]]]).abs();
                    assert!(diff < 1e-9, "{kind} row {i} class {c} diff {diff}");
                }
            }
        }
    }

    #[test]
    fn train_accuracy_monotone_in_ensemble_size() {
        let (x, y) = blobs(2, 40, 3, 0.6, 14);
        let acc_at = |kind: ClassifierKind, n_estimators: usize| {
            let mut spec = ClassifierSpec::new(kind, 42);
            spec.params.n_estimators = n_estimators;
            let model = fit(&spec, x.view(), &y).unwrap();
            let pred = model.predict(x.view());
            pred.iter().zip(y.iter()).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
        };
        for kind in [ClassifierKind::Gbdt, ClassifierKind::RandomForest] {
            let accs: Vec<f64> = [10, 100, 500].iter().map(|&n| acc_at(kind, n)).collect();
            assert!(
                accs[0] <= accs[1] + 1e-9 && accs[1] <= accs[2] + 1e-9,
                "{kind} accuracies {accs:?}"
            );
        }
    }

    #[test]
    fn random_labels_hold_out_near_chance() {
        // Null-signal Monte-Carlo: held-out accuracy within 1/K ± 3·SE.
        let k = 4usize;
        let n_train = 400;
        let n_test = 2000;
        let mut rng = crate::rng::rng_for(15, "null-clf", 0);
        let mut gen = |n: usize| {
            let mut x = Array2::<f64>::zeros((n, 5));
            let mut y = Vec::with_capacity(n);
            for i in 0..n {
                for j in 0..5 {
                    x[[i, j]] = rng.random::<f64>();
                }
                y.push(i % k);
            }
            (x, y)
        };
        let (xt, yt) = gen(n_train);
        let (xh, yh) = gen(n_test);
        let model = fit(&small_spec(ClassifierKind::Logistic), xt.view(), &yt).unwrap();
        let pred = model.predict(xh.view());
        let acc = pred.iter().zip(yh.iter()).filter(|(a, b)| a == b).count() as f64
            / yh.len() as f64;
        let se = (0.25 * 0.75 / n_test as f64).sqrt();
        assert!((acc - 0.25).abs() < 3.0 * se, "null accuracy {acc}");
    }

    #[test]
    fn soft_vote_identity_and_two_hot() {
        let p = Array2::from_shape_vec((1, 3), vec![0.2, 0.5, 0.3]).unwrap();
        let v = soft_vote(&[p.clone(), p.clone()]).unwrap();
        for c in 0..3 {
            assert!((v[[0, c]] - p[[0, c]]).abs() < 1e-12);
        }

        let a = Array2::from_shape_vec((1, 3), vec![1.0, 0.0, 0.0]).unwrap();
        let b = Array2::from_shape_vec((1, 3), vec![0.0, 0.0, 1.0]).unwrap();
        let v = soft_vote(&[a, b]).unwrap();
        assert!((v[[0, 0]] - 0.5).abs() < 1e-12);
        assert!((v[[0, 1]]).abs() < 1e-12);
        assert!((v[[0, 2]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn soft_vote_of_seven_model_outputs() {
        let (x, y) = blobs(5, 10, 4, 0.4, 16);
        let mut probas = Vec::new();
        for i in 0..7 {
            let mut spec = small_spec(if i % 2 == 0 {
                ClassifierKind::LdaShrinkage
            } else {
                ClassifierKind::Logistic
            });
            spec.seed = 42 + i as u64;
            let model = fit(&spec, x.view(), &y).unwrap();
            probas.push(model.predict_proba(x.view()));
        }
        let v = soft_vote(&probas).unwrap();
        assert_eq!(v.dim(), (50, 5));
        for row in v.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn soft_vote_shape_mismatch_is_error() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((2, 4));
        assert!(soft_vote(&[a, b]).is_err());
    }

    #[test]
    fn stacking_meta_feature_count() {
        let (x, y) = blobs(5, 12, 4, 0.4, 17);
        let bases = vec![
            small_spec(ClassifierKind::LdaShrinkage),
            small_spec(ClassifierKind::Logistic),
            small_spec(ClassifierKind::LinearSvm),
        ];
        let meta = small_spec(ClassifierKind::Logistic);
        let model = stacking(&bases, &meta, x.view(), &y, 3).unwrap();
        // 3 bases × 5 classes = 15 meta-features; verified via prediction.
        assert_eq!(model.bases.len(), 3);
        assert_eq!(model.n_classes, 5);
        let p = model.predict_proba(x.view());
        assert_eq!(p.dim(), (60, 5));
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stacking_single_base_close_to_base_alone() {
        let (x, y) = blobs(2, 40, 3, 0.5, 18);
        let (xt, yt) = blobs(2, 40, 3, 0.5, 19);
        let base = small_spec(ClassifierKind::LdaShrinkage);
        let meta = small_spec(ClassifierKind::Logistic);
        let stack = stacking(std::slice::from_ref(&base), &meta, x.view(), &y, 3).unwrap();
        let base_model = fit(&base, x.view(), &y).unwrap();

        let acc = |pred: Vec<usize>| {
            pred.iter().zip(yt.iter()).filter(|(a, b)| a == b).count() as f64 / yt.len() as f64
        };
        let stack_acc = acc(argmax_rows(&stack.predict_proba(xt.view())));
        let base_acc = acc(base_model.predict(xt.view()));
        assert!(
            (stack_acc - base_acc).abs() <= 0.02,
            "stack {stack_acc} vs base {base_acc}"
        );
    }

    #[test]
    fn stacking_rejects_class_starved_folds() {
        let (x, _) = blobs(2, 10, 3, 0.5, 20);
        // Class 1 has a single member: it cannot appear in every inner
        // training side.
        let mut y = vec![0usize; 20];
        y[3] = 1;
        let bases = vec![small_spec(ClassifierKind::LdaShrinkage)];
        let meta = small_spec(ClassifierKind::Logistic);
        assert!(stacking(&bases, &meta, x.view(), &y, 3).is_err());
    }

    #[test]
    fn planted_feature_ranks_first() {
        let mut rng = crate::rng::rng_for(21, "imp-test", 0);
        let n = 300;
        let d = 12;
        let mut x = Array2::<f64>::zeros((n, d));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            for j in 0..d {
                x[[i, j]] = rng.random::<f64>();
            }
            // Feature 7 carries the signal.
            x[[i, 7]] += class as f64 * 2.0;
            y.push(class);
        }
        for kind in [ClassifierKind::Gbdt, ClassifierKind::RandomForest, ClassifierKind::Logistic] {
            let model = fit(&small_spec(kind), x.view(), &y).unwrap();
            let imp = feature_importance(&model).unwrap();
            assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let best = imp
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(best, 7, "{kind} importances {imp:?}");
        }
    }

    #[test]
    fn null_importances_have_no_spurious_dominance() {
        let mut rng = crate::rng::rng_for(22, "imp-null", 0);
        let n = 400;
        let d = 30;
        let mut x = Array2::<f64>::zeros((n, d));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            for j in 0..d {
                x[[i, j]] = rng.random::<f64>();
            }
            y.push(i % 2);
        }
        let model = fit(&small_spec(ClassifierKind::Gbdt), x.view(), &y).unwrap();
        let imp = feature_importance(&model).unwrap();
        let mean = 1.0 / d as f64;
        let max = imp.iter().cloned().fold(0.0f64, f64::max);
        assert!(max < 10.0 * mean, "max importance {max} vs mean {mean}");
    }

    #[test]
    fn non_contiguous_labels_rejected() {
        let (x, _) = blobs(2, 10, 3, 0.5, 23);
        let y: Vec<usize> = (0..20).map(|i| if i % 2 == 0 { 0 } else { 2 }).collect();
        assert!(fit(&small_spec(ClassifierKind::LdaShrinkage), x.view(), &y).is_err());
    }

    #[test]
    fn non_finite_features_rejected() {
        let mut x = Array2::<f64>::zeros((4, 2));
        x[[1, 1]] = f64::NAN;
        let y = vec![0, 1, 0, 1];
        assert!(fit(&small_spec(ClassifierKind::Logistic), x.view(), &y).is_err());
    }

    #[test]
    fn stratified_folds_cover_and_balance() {
        let y: Vec<usize> = (0..100).map(|i| i % 5).collect();
        let folds = stratified_folds(&y, 5, 42).unwrap();
        let total: usize = folds.iter().map(|f| f.len()).sum();
        assert_eq!(total, 100);
        for f in &folds {
            assert_eq!(f.len(), 20);
            for class in 0..5 {
                let c = f.iter().filter(|&&i| y[i] == class).count();
                assert_eq!(c, 4);
            }
        }
    }
}
