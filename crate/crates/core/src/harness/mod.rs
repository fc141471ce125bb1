//! Evaluation protocols: leave-one-subject-out with the executable
//! anti-leakage audit, within-subject stratified k-fold, temporal
//! generalization, learning curves, and the ablation runner.

pub mod audit;
pub mod curve;
pub mod metrics;
pub mod tgm;

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{self, ClassifierKind, ClassifierParams, ClassifierSpec};
use crate::data::{EpochSet, FeatureFamily, FeatureInfo, FeatureMatrix};
use crate::error::{Error, Result};
use crate::features::{self, BandSpec};
use crate::preprocess::{apply_normalizer, fit_normalizer};
use crate::riemann;
use crate::rng::{derive_seed, rng_for};

pub use audit::{leakage_audit, AuditTrail, AuditVerdicts, Verdict};
pub use metrics::{balanced_accuracy, cohens_d, confusion_matrix, macro_f1, normalize_rows};

/// Which decoding route a pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gbdt,
    RandomForest,
    LdaShrinkage,
    LinearSvm,
    Logistic,
    Mdm,
    MdmEa,
    TsLda,
    TsLdaEa,
    TsSvm,
    TsSvmEa,
}

impl ModelKind {
    pub const ALL: [ModelKind; 11] = [
        ModelKind::Gbdt,
        ModelKind::RandomForest,
        ModelKind::LdaShrinkage,
        ModelKind::LinearSvm,
        ModelKind::Logistic,
        ModelKind::Mdm,
        ModelKind::MdmEa,
        ModelKind::TsLda,
        ModelKind::TsLdaEa,
        ModelKind::TsSvm,
        ModelKind::TsSvmEa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Gbdt => "gbdt",
            ModelKind::RandomForest => "random_forest",
            ModelKind::LdaShrinkage => "lda_shrinkage",
            ModelKind::LinearSvm => "linear_svm",
            ModelKind::Logistic => "logistic",
            ModelKind::Mdm => "mdm",
            ModelKind::MdmEa => "mdm_ea",
            ModelKind::TsLda => "ts_lda",
            ModelKind::TsLdaEa => "ts_lda_ea",
            ModelKind::TsSvm => "ts_svm",
            ModelKind::TsSvmEa => "ts_svm_ea",
        }
    }

    /// The classical head behind tangent-space kinds, `None` for MDM.
    fn head(&self) -> Option<ClassifierKind> {
        match self {
            ModelKind::Gbdt => Some(ClassifierKind::Gbdt),
            ModelKind::RandomForest => Some(ClassifierKind::RandomForest),
            ModelKind::LdaShrinkage | ModelKind::TsLda | ModelKind::TsLdaEa => {
                Some(ClassifierKind::LdaShrinkage)
            }
            ModelKind::LinearSvm | ModelKind::TsSvm | ModelKind::TsSvmEa => {
                Some(ClassifierKind::LinearSvm)
            }
            ModelKind::Logistic => Some(ClassifierKind::Logistic),
            ModelKind::Mdm | ModelKind::MdmEa => None,
        }
    }

    pub fn is_riemannian(&self) -> bool {
        matches!(
            self,
            ModelKind::Mdm
                | ModelKind::MdmEa
                | ModelKind::TsLda
                | ModelKind::TsLdaEa
                | ModelKind::TsSvm
                | ModelKind::TsSvmEa
        )
    }

    fn uses_ea(&self) -> bool {
        matches!(self, ModelKind::MdmEa | ModelKind::TsLdaEa | ModelKind::TsSvmEa)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Deliberate leakage injections for audit self-tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageInjection {
    #[default]
    None,
    /// Fit the normalizer on train + test.
    NormalizerOnAll,
    /// Fit PCA on train + test.
    PcaOnAll,
    /// Copy half of the held-out subject's trials into training.
    TestTrialsInTrain,
}

/// Everything a fold evaluation needs.
#[derive(Debug, Clone)]
pub struct PipelineSpec {
    pub model: ModelKind,
    pub params: ClassifierParams,
    pub families: Vec<FeatureFamily>,
    pub bands: Vec<BandSpec>,
    pub pca_k: Option<usize>,
    pub normalize: bool,
    pub seed: u64,
    pub strict_audit: bool,
    pub injection: LeakageInjection,
    /// Keep only these channels (feature dims shrink).
    pub channel_select: Option<Vec<usize>>,
    /// Zero-fill these channels (dims preserved).
    pub channel_zero: Vec<usize>,
    /// Crop epochs to this window (s relative to the stimulus).
    pub time_window: Option<(f64, f64)>,
}

impl PipelineSpec {
    pub fn new(model: ModelKind, seed: u64) -> Self {
        PipelineSpec {
            model,
            params: ClassifierParams::default(),
            families: vec![FeatureFamily::De],
            bands: features::default_bands(),
            pca_k: None,
            normalize: true,
            seed,
            strict_audit: false,
            injection: LeakageInjection::None,
            channel_select: None,
            channel_zero: Vec::new(),
            time_window: None,
        }
    }
}

/// One fold's outcome.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold_id: String,
    pub test_subject: usize,
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
    pub proba: Array2<f64>,
    pub confusion: Array2<f64>,
    pub balanced_accuracy: f64,
    pub macro_f1: f64,
}

/// A complete LOSO evaluation of one model.
#[derive(Debug)]
pub struct LosoRun {
    pub model: ModelKind,
    pub folds: Vec<FoldResult>,
    pub trail: AuditTrail,
    pub verdicts: AuditVerdicts,
}

impl LosoRun {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.balanced_accuracy).collect()
    }

    pub fn mean_balanced_accuracy(&self) -> f64 {
        let a = self.fold_accuracies();
        a.iter().sum::<f64>() / a.len().max(1) as f64
    }

    /// Aggregate confusion matrix over folds.
    pub fn total_confusion(&self) -> Array2<f64> {
        let k = self.folds.first().map(|f| f.confusion.nrows()).unwrap_or(0);
        let mut total = Array2::<f64>::zeros((k, k));
        for f in &self.folds {
            total += &f.confusion;
        }
        total
    }

    pub fn fold_predictions(&self) -> Vec<crate::stats::FoldPredictions> {
        self.folds
            .iter()
            .map(|f| crate::stats::FoldPredictions {
                y_true: f.y_true.clone(),
                y_pred: f.y_pred.clone(),
            })
            .collect()
    }
}

/// Apply channel selection/zeroing and time cropping ahead of a run.
pub fn prepare_epochs(epochs: &EpochSet, pipeline: &PipelineSpec) -> Result<EpochSet> {
    let mut out = epochs.clone();

    if let Some(select) = &pipeline.channel_select {
        if select.is_empty() {
            return Err(Error::Empty("channel selection is empty".into()));
        }
        if select.iter().any(|&c| c >= out.n_channels()) {
            return Err(Error::Invalid("channel selection out of range".into()));
        }
        let (t, _, s) = out.data.dim();
        let mut data = ndarray::Array3::<f64>::zeros((t, select.len(), s));
        for (new, &old) in select.iter().enumerate() {
            data.index_axis_mut(Axis(1), new)
                .assign(&out.data.index_axis(Axis(1), old));
        }
        out.channel_names = select.iter().map(|&c| out.channel_names[c].clone()).collect();
        out.data = data;
    }

    for &c in &pipeline.channel_zero {
        if c >= out.n_channels() {
            return Err(Error::Invalid(format!("channel_zero index {c} out of range")));
        }
        out.data.index_axis_mut(Axis(1), c).fill(0.0);
    }

    if let Some((w0, w1)) = pipeline.time_window {
        let (tmin, tmax) = out.provenance.window;
        if w0 < tmin - 1e-9 || w1 > tmax + 1e-9 || w1 <= w0 {
            return Err(Error::Invalid(format!(
                "time window [{w0}, {w1}] outside epoch extent [{tmin}, {tmax}]"
            )));
        }
        let first = ((w0 - tmin) * out.fs).round() as usize;
        let len = ((w1 - w0) * out.fs).round() as usize;
        let (t, c, s) = out.data.dim();
        let last = (first + len).min(s);
        let mut data = ndarray::Array3::<f64>::zeros((t, c, last - first));
        data.assign(&out.data.slice(ndarray::s![.., .., first..last]));
        out.data = data;
        out.provenance.window = (w0, w1);
    }

    Ok(out)
}

/// Leave-one-subject-out evaluation with the audit trail.
pub fn loso(epochs: &EpochSet, pipeline: &PipelineSpec) -> Result<LosoRun> {
    epochs.validate()?;
    let prepared = prepare_epochs(epochs, pipeline)?;
    let subjects = prepared.present_subjects();
    if subjects.len() < 2 {
        return Err(Error::Invalid(format!(
            "loso needs >= 2 subjects, got {}",
            subjects.len()
        )));
    }
    let n_classes = prepared.labels.iter().copied().max().unwrap_or(0) + 1;

    let outcomes: Result<Vec<(FoldResult, AuditTrail)>> = subjects
        .par_iter()
        .enumerate()
        .map(|(fold_idx, &test_subject)| {
            run_fold(&prepared, test_subject, fold_idx, n_classes, pipeline)
        })
        .collect();
    let outcomes = outcomes?;

    let (folds, trails): (Vec<FoldResult>, Vec<AuditTrail>) = outcomes.into_iter().unzip();
    let trail = AuditTrail::merge(trails);
    let verdicts = leakage_audit(&trail);
    if pipeline.strict_audit && !verdicts.all_pass() {
        let (num, name, witness) = verdicts.first_failure().unwrap();
        return Err(Error::Audit {
            checkpoint: num,
            witness: format!("{name}: {witness}"),
        });
    }
    Ok(LosoRun {
        model: pipeline.model,
        folds,
        trail,
        verdicts,
    })
}

fn run_fold(
    epochs: &EpochSet,
    test_subject: usize,
    fold_idx: usize,
    n_classes: usize,
    pipeline: &PipelineSpec,
) -> Result<(FoldResult, AuditTrail)> {
    let fold_id = format!("fold={}", epochs.subject_names[test_subject]);
    let fold_seed = derive_seed(pipeline.seed, "loso-fold", fold_idx as u64);

    let test_idx = epochs.trials_of_subject(test_subject);
    let clean_train_idx: Vec<usize> = (0..epochs.n_trials())
        .filter(|&t| epochs.subjects[t] != test_subject)
        .collect();
    let mut train_idx = clean_train_idx.clone();
    if pipeline.injection == LeakageInjection::TestTrialsInTrain {
        // Surgical injection: the classifier's training indices leak test
        // trials while the validation split below stays clean, so exactly
        // the subject-contamination checkpoint trips.
        for &t in test_idx.iter().take(test_idx.len() / 2) {
            train_idx.push(t);
        }
    }

    let mut trail = AuditTrail::from_epochs(epochs);
    let train_subjects: BTreeSet<usize> = train_idx.iter().map(|&t| epochs.subjects[t]).collect();
    trail.folds.push(audit::FoldScope {
        fold_id: fold_id.clone(),
        test_subject,
        train_subjects: train_subjects.clone(),
        train_trials: train_idx.clone(),
        test_trials: test_idx.clone(),
    });

    // Subject-grouped 20% validation split (reserved for early-stopping
    // consumers; logged so checkpoint 2 stays exercisable).
    validation_split_subjects(epochs, &clean_train_idx, fold_seed, &mut trail, &fold_id);

    let train = epochs.select_trials(&train_idx);
    let test = epochs.select_trials(&test_idx);

    let (train_n, test_n) = if pipeline.normalize {
        let (source, scope_subjects): (&EpochSet, BTreeSet<usize>) =
            if pipeline.injection == LeakageInjection::NormalizerOnAll {
                (epochs, epochs.subjects.iter().cloned().collect())
            } else {
                (&train, train_subjects.clone())
            };
        let norm = fit_normalizer(source, &fold_id)?;
        trail.record("normalizer.fit", &fold_id, scope_subjects);
        (apply_normalizer(&norm, &train)?, apply_normalizer(&norm, &test)?)
    } else {
        (train.clone(), test.clone())
    };

    let (y_pred, proba) = if pipeline.model.is_riemannian() {
        riemannian_route(
            &train_n,
            &test_n,
            pipeline,
            n_classes,
            fold_seed,
            &fold_id,
            &train_subjects,
            &mut trail,
        )?
    } else {
        classical_route(
            epochs,
            &train_n,
            &test_n,
            pipeline,
            fold_seed,
            &fold_id,
            &train_subjects,
            &mut trail,
        )?
    };

    let confusion = confusion_matrix(&test.labels, &y_pred, n_classes);
    let (bal, _) = balanced_accuracy(&confusion)?;
    let f1 = macro_f1(&confusion);
    Ok((
        FoldResult {
            fold_id,
            test_subject,
            y_true: test.labels.clone(),
            y_pred,
            proba,
            confusion,
            balanced_accuracy: bal,
            macro_f1: f1,
        },
        trail,
    ))
}

fn validation_split_subjects(
    epochs: &EpochSet,
    train_idx: &[usize],
    fold_seed: u64,
    trail: &mut AuditTrail,
    fold_id: &str,
) {
    use rand::seq::SliceRandom;
    let mut by_subject: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &t in train_idx {
        by_subject.entry(epochs.subjects[t]).or_default().push(t);
    }
    let mut val_subjects = BTreeSet::new();
    for (subject, mut trials) in by_subject {
        let mut rng = rng_for(fold_seed, "validation-split", subject as u64);
        trials.shuffle(&mut rng);
        let n_val = (trials.len() as f64 * 0.2).round() as usize;
        if n_val > 0 {
            val_subjects.insert(subject);
        }
    }
    trail.record("validation.split", fold_id, val_subjects);
}

#[allow(clippy::too_many_arguments)]
fn classical_route(
    all_epochs: &EpochSet,
    train: &EpochSet,
    test: &EpochSet,
    pipeline: &PipelineSpec,
    fold_seed: u64,
    fold_id: &str,
    train_subjects: &BTreeSet<usize>,
    trail: &mut AuditTrail,
) -> Result<(Vec<usize>, Array2<f64>)> {
    let f_train = features::extract_families(train, &pipeline.families, &pipeline.bands)?;
    let f_test = features::extract_families(test, &pipeline.families, &pipeline.bands)?;

    let (f_train, f_test) = if let Some(k) = pipeline.pca_k {
        let (model, scope) = if pipeline.injection == LeakageInjection::PcaOnAll {
            // Deliberately wrong: components from train + test.
            let f_all =
                features::extract_families(all_epochs, &pipeline.families, &pipeline.bands)?;
            (
                features::fit_pca(&f_all, k, fold_id)?,
                all_epochs.subjects.iter().cloned().collect::<BTreeSet<_>>(),
            )
        } else {
            (features::fit_pca(&f_train, k, fold_id)?, train_subjects.clone())
        };
        trail.record("pca.fit", fold_id, scope);
        (
            features::apply_pca(&model, &f_train)?,
            features::apply_pca(&model, &f_test)?,
        )
    } else {
        (f_train, f_test)
    };

    let head = pipeline.model.head().expect("classical route requires a head");
    let spec = ClassifierSpec {
        kind: head,
        seed: fold_seed,
        params: pipeline.params.clone(),
    };
    let model = classify::fit(&spec, f_train.values.view(), &train.labels)?;
    trail.record("classifier.fit", fold_id, train_subjects.clone());
    let proba = model.predict_proba(f_test.values.view());
    Ok((classify::argmax_rows(&proba), proba))
}

#[allow(clippy::too_many_arguments)]
fn riemannian_route(
    train: &EpochSet,
    test: &EpochSet,
    pipeline: &PipelineSpec,
    n_classes: usize,
    fold_seed: u64,
    fold_id: &str,
    train_subjects: &BTreeSet<usize>,
    trail: &mut AuditTrail,
) -> Result<(Vec<usize>, Array2<f64>)> {
    let train_covs = subject_covariances(train, pipeline.model.uses_ea(), fold_id, trail)?;
    let test_covs = subject_covariances(test, pipeline.model.uses_ea(), fold_id, trail)?;

    match pipeline.model {
        ModelKind::Mdm | ModelKind::MdmEa => {
            let model = riemann::mdm_fit(&train_covs, &train.labels, n_classes)?;
            trail.record("geometric_mean.fit", fold_id, train_subjects.clone());
            trail.record("classifier.fit", fold_id, train_subjects.clone());
            let mut proba = Array2::<f64>::zeros((test_covs.len(), n_classes));
            let mut preds = Vec::with_capacity(test_covs.len());
            for (i, c) in test_covs.iter().enumerate() {
                let (pred, distances) = riemann::mdm_predict(&model, c)?;
                let p = riemann::mdm_proba(&distances);
                for (k, v) in p.iter().enumerate() {
                    proba[[i, k]] = *v;
                }
                preds.push(pred);
            }
            Ok((preds, proba))
        }
        _ => {
            let reference = riemann::geometric_mean(
                &train_covs,
                riemann::KARCHER_TOL,
                riemann::KARCHER_MAX_ITER,
            )?;
            trail.record("geometric_mean.fit", fold_id, train_subjects.clone());

            let embed = |covs: &[riemann::SpdMatrix]| -> Result<FeatureMatrix> {
                let d = reference.dim();
                let len = d * (d + 1) / 2;
                let mut values = Array2::<f64>::zeros((covs.len(), len));
                for (i, c) in covs.iter().enumerate() {
                    let v = riemann::tangent_embed(c, &reference, fold_id)?;
                    for (j, x) in v.values.iter().enumerate() {
                        values[[i, j]] = *x;
                    }
                }
                let registry = (0..len)
                    .map(|j| FeatureInfo {
                        family: FeatureFamily::Tangent,
                        channel: None,
                        tag: format!("t{j}"),
                    })
                    .collect();
                Ok(FeatureMatrix { values, registry })
            };
            let f_train = embed(&train_covs)?;
            let f_test = embed(&test_covs)?;

            let head = pipeline.model.head().unwrap();
            let spec = ClassifierSpec {
                kind: head,
                seed: fold_seed,
                params: pipeline.params.clone(),
            };
            let model = classify::fit(&spec, f_train.values.view(), &train.labels)?;
            trail.record("classifier.fit", fold_id, train_subjects.clone());
            let proba = model.predict_proba(f_test.values.view());
            Ok((classify::argmax_rows(&proba), proba))
        }
    }
}

/// Per-trial Ledoit-Wolf covariances, optionally Euclidean-aligned per
/// subject (each subject whitened by its own trial-mean covariance; no
/// labels and no cross-subject statistics are involved).
fn subject_covariances(
    epochs: &EpochSet,
    ea: bool,
    fold_id: &str,
    trail: &mut AuditTrail,
) -> Result<Vec<riemann::SpdMatrix>> {
    if !ea {
        return (0..epochs.n_trials())
            .map(|t| riemann::lw_covariance(epochs.data.index_axis(Axis(0), t)).map(|(c, _)| c))
            .collect();
    }
    let mut covs: Vec<Option<riemann::SpdMatrix>> = vec![None; epochs.n_trials()];
    for subject in epochs.present_subjects() {
        let idx = epochs.trials_of_subject(subject);
        let sub = epochs.select_trials(&idx);
        let aligned = riemann::euclidean_align_subject(&sub)?;
        trail.record("ea.reference", fold_id, [subject].into_iter().collect());
        for (local, &global) in idx.iter().enumerate() {
            covs[global] = Some(aligned.covariances[local].clone());
        }
    }
    Ok(covs.into_iter().map(|c| c.unwrap()).collect())
}

// ---------------------------------------------------------------------------
// Within-subject stratified k-fold
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectCv {
    pub subject: String,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WithinSubjectReport {
    pub model: String,
    pub per_subject: Vec<SubjectCv>,
    /// Subjects skipped with the reason (too few trials of some class).
    pub skipped: Vec<(String, String)>,
}

/// Stratified k-fold CV inside every subject.
///
/// Subjects without at least `k` trials of every class are skipped with a
/// warning entry rather than failing the run.
pub fn within_subject_cv(
    epochs: &EpochSet,
    k_folds: usize,
    pipeline: &PipelineSpec,
) -> Result<WithinSubjectReport> {
    epochs.validate()?;
    if k_folds < 2 {
        return Err(Error::Invalid("within-subject CV needs k >= 2".into()));
    }
    let prepared = prepare_epochs(epochs, pipeline)?;
    let n_classes = prepared.labels.iter().copied().max().unwrap_or(0) + 1;

    let mut per_subject = Vec::new();
    let mut skipped = Vec::new();
    for subject in prepared.present_subjects() {
        let name = prepared.subject_names[subject].clone();
        let idx = prepared.trials_of_subject(subject);
        let sub = prepared.select_trials(&idx);

        let starved = (0..n_classes).find(|&c| {
            let count = sub.labels.iter().filter(|&&l| l == c).count();
            count < k_folds
        });
        if let Some(class) = starved {
            skipped.push((name, format!("class {class} has fewer than {k_folds} trials")));
            continue;
        }

        let fold_seed = derive_seed(pipeline.seed, "within-cv", subject as u64);
        let folds = classify::stratified_folds(&sub.labels, k_folds, fold_seed)?;
        let mut accs = Vec::with_capacity(k_folds);
        for test_local in &folds {
            let train_local: Vec<usize> =
                (0..sub.n_trials()).filter(|t| !test_local.contains(t)).collect();
            let train = sub.select_trials(&train_local);
            let test = sub.select_trials(test_local);
            let (train_n, test_n) = if pipeline.normalize {
                let norm = fit_normalizer(&train, &format!("within={name}"))?;
                (apply_normalizer(&norm, &train)?, apply_normalizer(&norm, &test)?)
            } else {
                (train.clone(), test.clone())
            };
            let f_train =
                features::extract_families(&train_n, &pipeline.families, &pipeline.bands)?;
            let f_test =
                features::extract_families(&test_n, &pipeline.families, &pipeline.bands)?;
            let head = pipeline.model.head().ok_or_else(|| {
                Error::Invalid("within-subject CV supports classical heads only".into())
            })?;
            let spec = ClassifierSpec {
                kind: head,
                seed: fold_seed,
                params: pipeline.params.clone(),
            };
            let model = classify::fit(&spec, f_train.values.view(), &train.labels)?;
            let pred = model.predict(f_test.values.view());
            let m = confusion_matrix(&test.labels, &pred, n_classes);
            accs.push(balanced_accuracy(&m)?.0);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
            / (accs.len() as f64 - 1.0).max(1.0);
        per_subject.push(SubjectCv {
            subject: name,
            fold_accuracies: accs,
            mean,
            sd: var.sqrt(),
        });
    }

    Ok(WithinSubjectReport {
        model: pipeline.model.name().to_string(),
        per_subject,
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Re-training permutation test
// ---------------------------------------------------------------------------

/// Label-permutation test that re-trains the whole pipeline per draw.
///
/// The frozen-prediction scheme in [`crate::stats::permutation_test`] makes
/// 10 000 draws tractable; this variant instead shuffles the labels of the
/// entire dataset and reruns LOSO, which is only feasible for small
/// synthetic runs but exercises the full training path.
pub fn permutation_test_retrain(
    epochs: &EpochSet,
    pipeline: &PipelineSpec,
    n_perm: usize,
    seed: u64,
) -> Result<crate::stats::StatReport> {
    use rand::seq::SliceRandom;
    if n_perm < 1 {
        return Err(Error::Invalid("permutation retrain: n_perm must be >= 1".into()));
    }
    let observed = loso(epochs, pipeline)?.mean_balanced_accuracy();
    let mut exceed = 0usize;
    for draw in 0..n_perm {
        let mut shuffled = epochs.clone();
        let mut rng = rng_for(seed, "permutation-retrain", draw as u64);
        shuffled.labels.shuffle(&mut rng);
        let stat = loso(&shuffled, pipeline)?.mean_balanced_accuracy();
        if stat >= observed {
            exceed += 1;
        }
    }
    let p = (1.0 + exceed as f64) / (1.0 + n_perm as f64);
    let mut report = crate::stats::StatReport {
        test: "permutation_retrain".into(),
        statistic_label: "acc".into(),
        statistic: observed,
        p_raw: p,
        p_corrected: p,
        correction: crate::stats::Correction::None,
        m: 1,
        alternative: crate::stats::Alternative::OneSidedGreater,
        extra: Default::default(),
        warning: None,
    };
    report.extra.insert("n_perm".into(), n_perm as f64);
    Ok(report)
}

/// Check class-proportion balance of a stratified fold assignment: within
/// each fold, every class count is within ±1 of the stratified ideal.
pub fn stratification_balanced(labels: &[usize], folds: &[Vec<usize>]) -> bool {
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    for fold in folds {
        for class in 0..k {
            let total = labels.iter().filter(|&&l| l == class).count() as f64;
            let ideal = total / folds.len() as f64;
            let got = fold.iter().filter(|&&i| labels[i] == class).count() as f64;
            if (got - ideal).abs() > 1.0 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, PlantSpec, SynthSpec};

    fn null_spec(subjects: usize, trials_per_class: usize) -> SynthSpec {
        SynthSpec {
            subjects,
            trials_per_class,
            channels: 4,
            ..Default::default()
        }
    }

    fn fast_pipeline(model: ModelKind) -> PipelineSpec {
        let mut p = PipelineSpec::new(model, 42);
        p.params.n_estimators = 15;
        p.params.max_iter = 60;
        p
    }

    #[test]
    fn loso_has_one_fold_per_subject() {
        let (epochs, _) = generate(&null_spec(4, 3)).unwrap();
        let run = loso(&epochs, &fast_pipeline(ModelKind::LdaShrinkage)).unwrap();
        assert_eq!(run.folds.len(), 4);
        assert!(run.verdicts.all_pass(), "{:?}", run.verdicts);
        for (i, f) in run.folds.iter().enumerate() {
            assert_eq!(f.test_subject, i);
            assert_eq!(f.y_true.len(), 15);
            // Confusion row sums equal per-class trial counts.
            for c in 0..5 {
                let count = f.y_true.iter().filter(|&&l| l == c).count() as f64;
                assert_eq!(f.confusion.row(c).sum(), count);
            }
            for row in f.proba.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn loso_two_subjects_trains_on_the_other() {
        let (epochs, _) = generate(&null_spec(2, 3)).unwrap();
        let run = loso(&epochs, &fast_pipeline(ModelKind::Logistic)).unwrap();
        assert_eq!(run.folds.len(), 2);
        let f0 = &run.trail.folds[0];
        assert_eq!(f0.test_subject, 0);
        assert!(f0.train_subjects.contains(&1));
        assert!(!f0.train_subjects.contains(&0));
    }

    #[test]
    fn loso_single_subject_is_error() {
        let (epochs, _) = generate(&null_spec(1, 3)).unwrap();
        assert!(loso(&epochs, &fast_pipeline(ModelKind::Logistic)).is_err());
    }

    #[test]
    fn normalizer_injection_fails_exactly_checkpoint_1() {
        let (epochs, _) = generate(&null_spec(3, 3)).unwrap();
        let mut p = fast_pipeline(ModelKind::LdaShrinkage);
        p.injection = LeakageInjection::NormalizerOnAll;
        let run = loso(&epochs, &p).unwrap();
        let v = &run.verdicts.checkpoints;
        assert!(!v[0].passed());
        assert!(v[1].passed() && v[2].passed() && v[3].passed());
        let (num, name, witness) = run.verdicts.first_failure().unwrap();
        assert_eq!((num, name), (1, "normalization leakage"));
        assert!(witness.contains("normalizer.fit"));
    }

    #[test]
    fn pca_injection_fails_exactly_checkpoint_1() {
        let (epochs, _) = generate(&null_spec(3, 4)).unwrap();
        let mut p = fast_pipeline(ModelKind::LdaShrinkage);
        p.pca_k = Some(5);
        p.injection = LeakageInjection::PcaOnAll;
        let run = loso(&epochs, &p).unwrap();
        let v = &run.verdicts.checkpoints;
        assert!(!v[0].passed());
        assert!(v[1].passed() && v[2].passed() && v[3].passed());
        let (_, _, witness) = run.verdicts.first_failure().unwrap();
        assert!(witness.contains("pca.fit"), "{witness}");
    }

    #[test]
    fn trial_injection_fails_exactly_checkpoint_3() {
        let (epochs, _) = generate(&null_spec(3, 3)).unwrap();
        let mut p = fast_pipeline(ModelKind::LdaShrinkage);
        p.injection = LeakageInjection::TestTrialsInTrain;
        let run = loso(&epochs, &p).unwrap();
        let v = &run.verdicts.checkpoints;
        assert!(v[0].passed(), "{:?}", v[0]);
        assert!(v[1].passed());
        assert!(!v[2].passed());
        assert!(v[3].passed());
    }

    #[test]
    fn strict_audit_aborts_with_witness() {
        let (epochs, _) = generate(&null_spec(3, 3)).unwrap();
        let mut p = fast_pipeline(ModelKind::LdaShrinkage);
        p.injection = LeakageInjection::NormalizerOnAll;
        p.strict_audit = true;
        match loso(&epochs, &p) {
            Err(Error::Audit { checkpoint, witness }) => {
                assert_eq!(checkpoint, 1);
                assert!(witness.contains("normalization leakage"));
            }
            other => panic!("expected audit error, got {other:?}"),
        }
    }

    #[test]
    fn riemannian_routes_run_clean() {
        let (epochs, _) = generate(&null_spec(3, 3)).unwrap();
        for model in [ModelKind::Mdm, ModelKind::MdmEa, ModelKind::TsLda, ModelKind::TsSvmEa] {
            let run = loso(&epochs, &fast_pipeline(model)).unwrap();
            assert_eq!(run.folds.len(), 3);
            assert!(run.verdicts.all_pass(), "{model}: {:?}", run.verdicts);
        }
    }

    #[test]
    fn loso_results_are_deterministic() {
        let (epochs, _) = generate(&null_spec(3, 4)).unwrap();
        let p = fast_pipeline(ModelKind::Gbdt);
        let a = loso(&epochs, &p).unwrap();
        let b = loso(&epochs, &p).unwrap();
        for (fa, fb) in a.folds.iter().zip(b.folds.iter()) {
            assert_eq!(fa.y_pred, fb.y_pred);
            assert_eq!(fa.proba, fb.proba);
        }
    }

    #[test]
    fn signal_plant_is_decodable() {
        let spec = SynthSpec {
            subjects: 3,
            trials_per_class: 8,
            channels: 4,
            plant: PlantSpec::BandAmplitude {
                lo: 8.0,
                hi: 13.0,
                channels: vec![0, 1],
            },
            snr: 1.5,
            subject_gain_sigma: 0.05,
            ..Default::default()
        };
        let (epochs, _) = generate(&spec).unwrap();
        let mut p = fast_pipeline(ModelKind::Gbdt);
        p.params.n_estimators = 40;
        let run = loso(&epochs, &p).unwrap();
        let acc = run.mean_balanced_accuracy();
        assert!(acc > 0.7, "planted-signal accuracy {acc}");
    }

    #[test]
    fn within_subject_cv_runs_and_stratifies() {
        let (epochs, _) = generate(&null_spec(2, 10)).unwrap();
        let report =
            within_subject_cv(&epochs, 5, &fast_pipeline(ModelKind::LdaShrinkage)).unwrap();
        assert_eq!(report.per_subject.len(), 2);
        assert!(report.skipped.is_empty());
        for s in &report.per_subject {
            assert_eq!(s.fold_accuracies.len(), 5);
        }
        // Stratification: 50 trials, 5 folds of 10 with 2 per class.
        let sub = epochs.select_trials(&epochs.trials_of_subject(0));
        let folds = classify::stratified_folds(&sub.labels, 5, 1).unwrap();
        assert!(stratification_balanced(&sub.labels, &folds));
        for f in &folds {
            assert_eq!(f.len(), 10);
        }
    }

    #[test]
    fn within_subject_cv_skips_starved_subjects() {
        let (epochs, _) = generate(&null_spec(2, 10)).unwrap();
        // Keep only one class-0 trial for subject 1.
        let mut dropped = 0;
        let keep: Vec<usize> = (0..epochs.n_trials())
            .filter(|&t| {
                if epochs.subjects[t] == 1 && epochs.labels[t] == 0 {
                    dropped += 1;
                    dropped <= 1
                } else {
                    true
                }
            })
            .collect();
        let subset = epochs.select_trials(&keep);
        let report =
            within_subject_cv(&subset, 5, &fast_pipeline(ModelKind::LdaShrinkage)).unwrap();
        assert_eq!(report.per_subject.len(), 1);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].0, "S02");
    }

    #[test]
    fn retrain_permutation_runs_on_small_fixtures() {
        let (epochs, _) = generate(&null_spec(2, 3)).unwrap();
        let p = fast_pipeline(ModelKind::LdaShrinkage);
        let r = permutation_test_retrain(&epochs, &p, 3, 42).unwrap();
        assert!((0.0..=1.0).contains(&r.p_raw));
        assert_eq!(r.extra["n_perm"], 3.0);
    }

    #[test]
    fn channel_and_window_preparation() {
        let (epochs, _) = generate(&null_spec(2, 2)).unwrap();
        let mut p = fast_pipeline(ModelKind::LdaShrinkage);
        p.channel_select = Some(vec![0, 2]);
        p.time_window = Some((0.0, 0.5));
        let prepared = prepare_epochs(&epochs, &p).unwrap();
        assert_eq!(prepared.n_channels(), 2);
        assert_eq!(prepared.n_samples(), 128);
        assert_eq!(prepared.provenance.window, (0.0, 0.5));

        p.channel_select = Some(vec![9]);
        assert!(prepare_epochs(&epochs, &p).is_err());
        p.channel_select = None;
        p.time_window = Some((-1.0, 0.5));
        assert!(prepare_epochs(&epochs, &p).is_err());
    }
}
