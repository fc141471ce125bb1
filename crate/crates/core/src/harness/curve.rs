//! Learning curves over training-subject count and the ablation runner
//! (feature families, time windows, channel regions, PCA variants).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{EpochSet, FeatureFamily};
use crate::error::{Error, Result};
use crate::rng::rng_for;

use super::{loso, PipelineSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearningPoint {
    pub n_train_subjects: usize,
    /// Mean balanced accuracy per repetition (mean over held-out subjects).
    pub per_rep: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

/// Subject-count learning curve: for each `n`, sample `n` training subjects
/// without replacement (`reps` seeded draws) and evaluate on every
/// remaining subject.
pub fn learning_curve(
    epochs: &EpochSet,
    ns: &[usize],
    reps: usize,
    pipeline: &PipelineSpec,
) -> Result<Vec<LearningPoint>> {
    epochs.validate()?;
    let prepared = super::prepare_epochs(epochs, pipeline)?;
    let subjects = prepared.present_subjects();
    let n_subjects = subjects.len();
    if ns.iter().any(|&n| n == 0 || n >= n_subjects) {
        return Err(Error::Invalid(format!(
            "learning curve: every N must be in 1..{n_subjects}"
        )));
    }
    let n_classes = prepared.labels.iter().copied().max().unwrap_or(0) + 1;

    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut per_rep = Vec::with_capacity(reps);
        for rep in 0..reps {
            let mut pool = subjects.clone();
            let mut rng = rng_for(pipeline.seed, "learning-curve", ((n as u64) << 16) | rep as u64);
            pool.shuffle(&mut rng);
            let train_subjects: Vec<usize> = pool[..n].to_vec();
            let eval_subjects: Vec<usize> = pool[n..].to_vec();

            let train_idx: Vec<usize> = (0..prepared.n_trials())
                .filter(|&t| train_subjects.contains(&prepared.subjects[t]))
                .collect();
            let train = prepared.select_trials(&train_idx);

            // One fit on the pooled training subjects, evaluated per
            // held-out subject.
            let mut accs = Vec::with_capacity(eval_subjects.len());
            for &s in &eval_subjects {
                let test = prepared.select_trials(&prepared.trials_of_subject(s));
                let acc = super::curve::fit_eval_once(&train, &test, pipeline, n_classes)?;
                accs.push(acc);
            }
            per_rep.push(accs.iter().sum::<f64>() / accs.len().max(1) as f64);
        }
        let mean = per_rep.iter().sum::<f64>() / per_rep.len() as f64;
        let var = per_rep.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
            / (per_rep.len() as f64 - 1.0).max(1.0);
        points.push(LearningPoint {
            n_train_subjects: n,
            per_rep,
            mean,
            sd: var.sqrt(),
        });
    }
    Ok(points)
}

/// Single train/test evaluation with the pipeline's feature route
/// (classical heads only), returning balanced accuracy.
pub(crate) fn fit_eval_once(
    train: &EpochSet,
    test: &EpochSet,
    pipeline: &PipelineSpec,
    n_classes: usize,
) -> Result<f64> {
    use crate::classify::{self, ClassifierSpec};
    use crate::features;
    use crate::preprocess::{apply_normalizer, fit_normalizer};

    let (train_n, test_n) = if pipeline.normalize {
        let norm = fit_normalizer(train, "curve")?;
        (apply_normalizer(&norm, train)?, apply_normalizer(&norm, test)?)
    } else {
        (train.clone(), test.clone())
    };
    let f_train = features::extract_families(&train_n, &pipeline.families, &pipeline.bands)?;
    let f_test = features::extract_families(&test_n, &pipeline.families, &pipeline.bands)?;
    let head = pipeline
        .model
        .head()
        .ok_or_else(|| Error::Invalid("learning curve supports classical heads only".into()))?;
    let spec = ClassifierSpec {
        kind: head,
        seed: pipeline.seed,
        params: pipeline.params.clone(),
    };
    let model = classify::fit(&spec, f_train.values.view(), &train.labels)?;
    let pred = model.predict(f_test.values.view());
    let m = super::metrics::confusion_matrix(&test.labels, &pred, n_classes);
    Ok(super::metrics::balanced_accuracy(&m)?.0)
}

// ---------------------------------------------------------------------------
// Ablation runner
// ---------------------------------------------------------------------------

/// One grid point of an ablation axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "axis")]
pub enum AblationPoint {
    FeatureFamily {
        name: String,
        families: Vec<FeatureFamily>,
    },
    TimeWindow {
        name: String,
        window: (f64, f64),
    },
    ChannelRegion {
        name: String,
        channels: Vec<String>,
    },
    Pca {
        name: String,
        families: Vec<FeatureFamily>,
        k: usize,
    },
}

impl AblationPoint {
    pub fn name(&self) -> &str {
        match self {
            AblationPoint::FeatureFamily { name, .. } => name,
            AblationPoint::TimeWindow { name, .. } => name,
            AblationPoint::ChannelRegion { name, .. } => name,
            AblationPoint::Pca { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub delta_vs_chance: f64,
    pub fold_accuracies: Vec<f64>,
}

/// One LOSO run per grid point; everything but the ablated knob is held
/// identical (same seed, same audit).
pub fn ablation_run(
    epochs: &EpochSet,
    grid: &[AblationPoint],
    base: &PipelineSpec,
) -> Result<Vec<AblationRow>> {
    if grid.is_empty() {
        return Err(Error::Empty("ablation: empty grid".into()));
    }
    let n_classes = epochs.labels.iter().copied().max().unwrap_or(0) + 1;
    let chance = 1.0 / n_classes as f64;

    let mut rows = Vec::with_capacity(grid.len());
    for point in grid {
        let mut pipeline = base.clone();
        match point {
            AblationPoint::FeatureFamily { families, .. } => {
                pipeline.families = families.clone();
                pipeline.pca_k = None;
            }
            AblationPoint::TimeWindow { window, .. } => {
                pipeline.time_window = Some(*window);
            }
            AblationPoint::ChannelRegion { channels, .. } => {
                if channels.is_empty() {
                    return Err(Error::Empty(format!("ablation region {} is empty", point.name())));
                }
                let idx: Vec<usize> = channels
                    .iter()
                    .map(|name| {
                        epochs
                            .channel_names
                            .iter()
                            .position(|c| c == name)
                            .ok_or_else(|| {
                                Error::Invalid(format!("region channel {name:?} not found"))
                            })
                    })
                    .collect::<Result<_>>()?;
                pipeline.channel_select = Some(idx);
            }
            AblationPoint::Pca { families, k, .. } => {
                pipeline.families = families.clone();
                pipeline.pca_k = Some(*k);
            }
        }
        let run = loso(epochs, &pipeline)?;
        let accs = run.fold_accuracies();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
            / (accs.len() as f64 - 1.0).max(1.0);
        rows.push(AblationRow {
            name: point.name().to_string(),
            mean,
            sd: var.sqrt(),
            delta_vs_chance: mean - chance,
            fold_accuracies: accs,
        });
    }
    Ok(rows)
}
