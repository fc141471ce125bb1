//! Task-level analyses: pairwise and triplet vowel discrimination,
//! acoustic-neural representational similarity over Bark-scaled formant
//! distances, per-channel importance aggregation with dropout curves, and
//! ERP component characterisation.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classify;
use crate::data::{EpochSet, FeatureInfo, N_CLASSES};
use crate::error::{Error, Result};
use crate::harness::{self, cohens_d, loso, PipelineSpec};
use crate::stats::{self, Alternative, StatReport};

pub const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// All C(5,2) = 10 vowel pairs in canonical order.
pub fn vowel_pairs() -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for a in 0..N_CLASSES {
        for b in (a + 1)..N_CLASSES {
            pairs.push((a, b));
        }
    }
    pairs
}

/// The three vowel triplets: /a e i/, /a i u/, /i o u/.
pub fn vowel_triplets() -> Vec<[usize; 3]> {
    vec![[0, 1, 2], [0, 2, 4], [2, 3, 4]]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskResult {
    /// e.g. "a_vs_o" or "aei".
    pub task: String,
    pub classes: Vec<usize>,
    pub chance: f64,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub cohens_d: f64,
    pub p_raw: f64,
    pub p_bonferroni: f64,
}

/// Run every pair (chance 0.5, Bonferroni m=10) and triplet (chance 1/3,
/// m=3) as its own LOSO problem with relabelled classes.
pub fn pairwise_tasks(epochs: &EpochSet, pipeline: &PipelineSpec) -> Result<Vec<TaskResult>> {
    let present = epochs.present_classes();
    if present.len() < N_CLASSES {
        return Err(Error::Invalid(format!(
            "pairwise tasks need all {N_CLASSES} classes, have {present:?}"
        )));
    }

    let mut tasks: Vec<(String, Vec<usize>)> = Vec::new();
    for (a, b) in vowel_pairs() {
        tasks.push((format!("{}_vs_{}", VOWELS[a], VOWELS[b]), vec![a, b]));
    }
    for t in vowel_triplets() {
        let name: String = t.iter().map(|&c| VOWELS[c]).collect();
        tasks.push((name, t.to_vec()));
    }

    let mut results = Vec::with_capacity(tasks.len());
    for (name, classes) in &tasks {
        let run = run_subtask(epochs, classes, pipeline)?;
        let chance = 1.0 / classes.len() as f64;
        let accs = run.fold_accuracies();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
            / (accs.len() as f64 - 1.0).max(1.0);
        let d = cohens_d(&accs, chance)?;
        let m = if classes.len() == 2 { 10 } else { 3 };
        let report = stats::wilcoxon_signed_rank(&accs, chance, Alternative::OneSidedGreater)?
            .with_bonferroni(m);
        results.push(TaskResult {
            task: name.clone(),
            classes: classes.clone(),
            chance,
            fold_accuracies: accs,
            mean,
            sd: var.sqrt(),
            cohens_d: d,
            p_raw: report.p_raw,
            p_bonferroni: report.p_corrected,
        });
    }
    Ok(results)
}

fn run_subtask(
    epochs: &EpochSet,
    classes: &[usize],
    pipeline: &PipelineSpec,
) -> Result<harness::LosoRun> {
    let relabel: BTreeMap<usize, usize> = classes
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();
    let keep: Vec<usize> = (0..epochs.n_trials())
        .filter(|&t| relabel.contains_key(&epochs.labels[t]))
        .collect();
    let mut subset = epochs.select_trials(&keep);
    for l in subset.labels.iter_mut() {
        *l = relabel[l];
    }
    loso(&subset, pipeline)
}

// ---------------------------------------------------------------------------
// Bark scale and acoustic distances
// ---------------------------------------------------------------------------

/// First and second formant per vowel (Hz), supplied via configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FormantTable {
    /// Keyed "a", "e", "i", "o", "u".
    pub f1: BTreeMap<String, f64>,
    pub f2: BTreeMap<String, f64>,
}

impl FormantTable {
    pub fn validate(&self) -> Result<()> {
        for v in VOWELS {
            for (name, table) in [("f1", &self.f1), ("f2", &self.f2)] {
                let value = table
                    .get(v)
                    .ok_or_else(|| Error::Config(format!("formant table missing {name}[{v}]")))?;
                if !(*value > 0.0) {
                    return Err(Error::Config(format!("formant {name}[{v}] must be positive")));
                }
            }
        }
        Ok(())
    }
}

/// Traunmüller Bark transform: `z = 26.81·f/(1960+f) − 0.53`.
pub fn bark(f_hz: f64) -> Result<f64> {
    if !(f_hz > 0.0) {
        return Err(Error::Invalid(format!("bark: frequency {f_hz} must be positive")));
    }
    Ok(26.81 * f_hz / (1960.0 + f_hz) - 0.53)
}

/// 5×5 Euclidean distance matrix in Bark-scaled (F1, F2) space.
pub fn acoustic_distances(table: &FormantTable) -> Result<Array2<f64>> {
    table.validate()?;
    let coords: Vec<(f64, f64)> = VOWELS
        .iter()
        .map(|v| Ok((bark(table.f1[*v])?, bark(table.f2[*v])?)))
        .collect::<Result<_>>()?;
    let mut m = Array2::<f64>::zeros((N_CLASSES, N_CLASSES));
    for i in 0..N_CLASSES {
        for j in 0..N_CLASSES {
            let dz1 = coords[i].0 - coords[j].0;
            let dz2 = coords[i].1 - coords[j].1;
            m[[i, j]] = (dz1 * dz1 + dz2 * dz2).sqrt();
        }
    }
    Ok(m)
}

/// Condense a symmetric 5×5 matrix to the 10 upper-triangle pair values in
/// [`vowel_pairs`] order.
pub fn condensed_pairs(m: &Array2<f64>) -> Vec<f64> {
    vowel_pairs().iter().map(|&(a, b)| m[[a, b]]).collect()
}

/// Representational similarity: Spearman ρ between acoustic pair distances
/// and neural confusion (1 − pairwise accuracy) over the 10 pairs.
pub fn rsa(
    acoustic: &Array2<f64>,
    pair_results: &[TaskResult],
    n_perm: usize,
    seed: u64,
) -> Result<StatReport> {
    let pairs = vowel_pairs();
    let mut confusion = Vec::with_capacity(pairs.len());
    for (a, b) in &pairs {
        let name = format!("{}_vs_{}", VOWELS[*a], VOWELS[*b]);
        let task = pair_results
            .iter()
            .find(|t| t.task == name)
            .ok_or_else(|| Error::Shape(format!("rsa: missing pair task {name}")))?;
        confusion.push(1.0 - task.mean);
    }
    let distances = condensed_pairs(acoustic);
    stats::spearman(&distances, &confusion, n_perm, seed)
}

// ---------------------------------------------------------------------------
// Electrode importance and channel dropout
// ---------------------------------------------------------------------------

/// Per-channel importance shares: member-feature importances summed per
/// channel, averaged over folds, normalised to unit total.
///
/// Every feature column must map to a channel; mixed-channel features
/// (PCA, tangent) are not attributable and error out.
pub fn electrode_importance(
    per_fold_importances: &[Vec<f64>],
    registry: &[FeatureInfo],
    n_channels: usize,
) -> Result<Vec<f64>> {
    if per_fold_importances.is_empty() {
        return Err(Error::Empty("electrode importance: no folds".into()));
    }
    for (col, info) in registry.iter().enumerate() {
        if info.channel.is_none() {
            return Err(Error::Invalid(format!(
                "feature column {col} ({}) has no single-channel home",
                info.family
            )));
        }
    }
    let mut mean_importance = vec![0.0f64; registry.len()];
    for fold in per_fold_importances {
        if fold.len() != registry.len() {
            return Err(Error::Shape(format!(
                "importance length {} does not match registry {}",
                fold.len(),
                registry.len()
            )));
        }
        for (m, v) in mean_importance.iter_mut().zip(fold.iter()) {
            *m += v;
        }
    }
    for m in mean_importance.iter_mut() {
        *m /= per_fold_importances.len() as f64;
    }

    let mut shares = vec![0.0f64; n_channels];
    for (col, info) in registry.iter().enumerate() {
        shares[info.channel.unwrap()] += mean_importance[col];
    }
    let total: f64 = shares.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numerical("electrode importance: zero total".into()));
    }
    for s in shares.iter_mut() {
        *s /= total;
    }
    Ok(shares)
}

/// LOSO-averaged per-channel importance for a pipeline (classical heads).
pub fn loso_electrode_importance(
    epochs: &EpochSet,
    pipeline: &PipelineSpec,
) -> Result<(Vec<f64>, harness::LosoRun)> {
    use crate::features;
    use crate::preprocess::{apply_normalizer, fit_normalizer};

    if pipeline.pca_k.is_some() || pipeline.model.is_riemannian() {
        return Err(Error::Invalid(
            "electrode importance requires per-channel feature columns".into(),
        ));
    }
    let run = loso(epochs, pipeline)?;

    // Re-fit per fold to collect importances (the harness run keeps fold
    // results; models are not retained there).
    let prepared = harness::prepare_epochs(epochs, pipeline)?;
    let subjects = prepared.present_subjects();
    let mut per_fold = Vec::with_capacity(subjects.len());
    let mut registry: Option<Vec<FeatureInfo>> = None;
    for (fold_idx, &test_subject) in subjects.iter().enumerate() {
        let train_idx: Vec<usize> = (0..prepared.n_trials())
            .filter(|&t| prepared.subjects[t] != test_subject)
            .collect();
        let train = prepared.select_trials(&train_idx);
        let train_n = if pipeline.normalize {
            let norm = fit_normalizer(&train, "importance")?;
            apply_normalizer(&norm, &train)?
        } else {
            train.clone()
        };
        let f_train = features::extract_families(&train_n, &pipeline.families, &pipeline.bands)?;
        let spec = classify::ClassifierSpec {
            kind: match pipeline.model {
                harness::ModelKind::Gbdt => classify::ClassifierKind::Gbdt,
                harness::ModelKind::RandomForest => classify::ClassifierKind::RandomForest,
                harness::ModelKind::LdaShrinkage => classify::ClassifierKind::LdaShrinkage,
                harness::ModelKind::LinearSvm => classify::ClassifierKind::LinearSvm,
                harness::ModelKind::Logistic => classify::ClassifierKind::Logistic,
                _ => unreachable!(),
            },
            seed: crate::rng::derive_seed(pipeline.seed, "loso-fold", fold_idx as u64),
            params: pipeline.params.clone(),
        };
        let model = classify::fit(&spec, f_train.values.view(), &train.labels)?;
        per_fold.push(classify::feature_importance(&model)?);
        registry.get_or_insert_with(|| f_train.registry.clone());
    }
    let registry = registry.unwrap();
    let shares = electrode_importance(&per_fold, &registry, prepared.n_channels())?;
    Ok((shares, run))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropDirection {
    Top,
    Bottom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropoutPoint {
    pub k: usize,
    pub direction: DropDirection,
    pub mean_accuracy: f64,
}

/// Re-run LOSO with the K most (or least) important channels zero-filled
/// before feature extraction. K = 0 reproduces the baseline bit-exactly
/// (identical seed path).
pub fn channel_dropout(
    epochs: &EpochSet,
    importance_ranking: &[usize],
    ks: &[usize],
    direction: DropDirection,
    pipeline: &PipelineSpec,
) -> Result<Vec<DropoutPoint>> {
    let n_ch = epochs.n_channels();
    if importance_ranking.len() != n_ch {
        return Err(Error::Shape(format!(
            "ranking covers {} channels, data has {n_ch}",
            importance_ranking.len()
        )));
    }
    if ks.iter().any(|&k| k >= n_ch) {
        return Err(Error::Invalid(format!("dropout K must be < {n_ch}")));
    }
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut pipeline = pipeline.clone();
        pipeline.channel_zero = match direction {
            DropDirection::Top => importance_ranking[..k].to_vec(),
            DropDirection::Bottom => importance_ranking[n_ch - k..].to_vec(),
        };
        let run = loso(epochs, &pipeline)?;
        points.push(DropoutPoint {
            k,
            direction,
            mean_accuracy: run.mean_balanced_accuracy(),
        });
    }
    Ok(points)
}

/// Channels sorted by descending importance share.
pub fn importance_ranking(shares: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..shares.len()).collect();
    idx.sort_by(|&a, &b| shares[b].partial_cmp(&shares[a]).unwrap().then(a.cmp(&b)));
    idx
}

// ---------------------------------------------------------------------------
// ERP characterisation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErpPeak {
    pub vowel: String,
    pub component: String,
    /// Peak amplitude (µV) of the grand average.
    pub peak_uv: f64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone)]
pub struct ErpReport {
    pub peaks: Vec<ErpPeak>,
    /// One-way ANOVA across vowels of the per-subject N1 peaks.
    pub n1_anova: StatReport,
    pub p2_anova: StatReport,
}

/// Grand-average ERP analysis over the named channels (averaged into one
/// virtual sensor): N1 = signed minimum in its window, P2 = signed maximum.
/// ANOVA groups are per-subject peak amplitudes per vowel.
pub fn erp(
    epochs: &EpochSet,
    channels: &[&str],
    n1_window_ms: (f64, f64),
    p2_window_ms: (f64, f64),
) -> Result<ErpReport> {
    epochs.validate()?;
    let ch_idx: Vec<usize> = channels
        .iter()
        .map(|name| {
            epochs
                .channel_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Invalid(format!("erp: channel {name:?} not found")))
        })
        .collect::<Result<_>>()?;

    let (tmin, tmax) = epochs.provenance.window;
    let fs = epochs.fs;
    let n_samp = epochs.n_samples();
    let window_range = |w: (f64, f64)| -> Result<(usize, usize)> {
        let (w0, w1) = (w.0 / 1000.0, w.1 / 1000.0);
        if w0 < tmin - 1e-9 || w1 > tmax + 1e-9 {
            return Err(Error::Invalid(format!(
                "erp window [{}, {}] ms outside epoch extent",
                w.0, w.1
            )));
        }
        let a = (((w0 - tmin) * fs).round() as usize).min(n_samp - 1);
        let b = (((w1 - tmin) * fs).round() as usize).clamp(a + 1, n_samp);
        Ok((a, b))
    };
    let n1_range = window_range(n1_window_ms)?;
    let p2_range = window_range(p2_window_ms)?;

    // Virtual-sensor waveform per (subject, vowel): average of trials then
    // of the named channels.
    let subjects = epochs.present_subjects();
    let mut per_subject_wave: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for &s in &subjects {
        for vowel in 0..N_CLASSES {
            let trials: Vec<usize> = epochs
                .trials_of_subject(s)
                .into_iter()
                .filter(|&t| epochs.labels[t] == vowel)
                .collect();
            if trials.is_empty() {
                continue;
            }
            let mut wave = vec![0.0f64; n_samp];
            for &t in &trials {
                for &c in &ch_idx {
                    for (k, w) in wave.iter_mut().enumerate() {
                        *w += epochs.data[[t, c, k]];
                    }
                }
            }
            let scale = (trials.len() * ch_idx.len()) as f64;
            for w in wave.iter_mut() {
                *w /= scale;
            }
            per_subject_wave.insert((s, vowel), wave);
        }
    }

    let peak_in = |wave: &[f64], range: (usize, usize), minimum: bool| -> (f64, usize) {
        let mut best = (wave[range.0], range.0);
        for k in range.0..range.1 {
            let better = if minimum { wave[k] < best.0 } else { wave[k] > best.0 };
            if better {
                best = (wave[k], k);
            }
        }
        best
    };

    // Grand-average peaks for the report table.
    let mut peaks = Vec::new();
    for vowel in 0..N_CLASSES {
        let mut grand = vec![0.0f64; n_samp];
        let mut n = 0.0;
        for &s in &subjects {
            if let Some(w) = per_subject_wave.get(&(s, vowel)) {
                for (k, g) in grand.iter_mut().enumerate() {
                    *g += w[k];
                }
                n += 1.0;
            }
        }
        if n == 0.0 {
            continue;
        }
        for g in grand.iter_mut() {
            *g /= n;
        }
        for (component, range, minimum) in
            [("N1", n1_range, true), ("P2", p2_range, false)]
        {
            let (amp, at) = peak_in(&grand, range, minimum);
            peaks.push(ErpPeak {
                vowel: VOWELS[vowel].to_string(),
                component: component.to_string(),
                peak_uv: amp,
                latency_ms: (tmin + at as f64 / fs) * 1000.0,
            });
        }
    }

    // Per-subject peak groups for the ANOVA.
    let groups_for = |range: (usize, usize), minimum: bool| -> Vec<Vec<f64>> {
        (0..N_CLASSES)
            .map(|vowel| {
                subjects
                    .iter()
                    .filter_map(|&s| {
                        per_subject_wave
                            .get(&(s, vowel))
                            .map(|w| peak_in(w, range, minimum).0)
                    })
                    .collect()
            })
            .collect()
    };
    let n1_anova = stats::anova_oneway(&groups_for(n1_range, true))?;
    let p2_anova = stats::anova_oneway(&groups_for(p2_range, false))?;

    Ok(ErpReport {
        peaks,
        n1_anova,
        p2_anova,
    })
}
