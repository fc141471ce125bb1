//! Temporal generalization: a shrinkage-LDA decoder trained independently
//! at each time point (LOSO across subjects), tested at every other point.
//! 307 samples at step 4 give the 77 × 77 matrix.

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::classify::{fit, ClassifierKind, ClassifierParams, ClassifierSpec};
use crate::data::EpochSet;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::metrics::{balanced_accuracy, confusion_matrix};

#[derive(Debug, Clone)]
pub struct TgmResult {
    /// `matrix[t_train][t_test]` = balanced accuracy, mean over folds.
    pub matrix: Array2<f64>,
    /// Time (s, stimulus-relative) of each decoded point.
    pub times: Vec<f64>,
    pub step: usize,
}

impl TgmResult {
    /// Index of the diagonal peak.
    pub fn diagonal_peak(&self) -> (usize, f64) {
        let mut best = (0usize, f64::MIN);
        for t in 0..self.matrix.nrows() {
            let v = self.matrix[[t, t]];
            if v > best.1 {
                best = (t, v);
            }
        }
        best
    }
}

/// Per-time-point LOSO decoding with train-scoped standardisation at each
/// time point.
pub fn tgm(epochs: &EpochSet, step: usize, seed: u64) -> Result<TgmResult> {
    epochs.validate()?;
    let n_samp = epochs.n_samples();
    if step == 0 || step >= n_samp {
        return Err(Error::Invalid(format!(
            "tgm: step {step} must be in 1..{n_samp}"
        )));
    }
    let subjects = epochs.present_subjects();
    if subjects.len() < 2 {
        return Err(Error::Invalid("tgm needs >= 2 subjects".into()));
    }
    let n_classes = epochs.labels.iter().copied().max().unwrap_or(0) + 1;
    let points: Vec<usize> = (0..n_samp).step_by(step).collect();
    let t_points = points.len();
    let (tmin, _) = epochs.provenance.window;
    let times: Vec<f64> = points.iter().map(|&p| tmin + p as f64 / epochs.fs).collect();

    // Channel-vector matrix at one time point: trials × channels.
    let at_time = |idx: &[usize], point: usize| -> Array2<f64> {
        let n_ch = epochs.n_channels();
        let mut x = Array2::<f64>::zeros((idx.len(), n_ch));
        for (row, &t) in idx.iter().enumerate() {
            for c in 0..n_ch {
                x[[row, c]] = epochs.data[[t, c, point]];
            }
        }
        x
    };

    let fold_matrices: Result<Vec<Array2<f64>>> = subjects
        .par_iter()
        .enumerate()
        .map(|(fold_idx, &test_subject)| -> Result<Array2<f64>> {
            let test_idx = epochs.trials_of_subject(test_subject);
            let train_idx: Vec<usize> = (0..epochs.n_trials())
                .filter(|&t| epochs.subjects[t] != test_subject)
                .collect();
            let train_labels: Vec<usize> = train_idx.iter().map(|&t| epochs.labels[t]).collect();
            let test_labels: Vec<usize> = test_idx.iter().map(|&t| epochs.labels[t]).collect();
            let fold_seed = derive_seed(seed, "tgm-fold", fold_idx as u64);

            let mut fold = Array2::<f64>::zeros((t_points, t_points));
            for (ti, &p_train) in points.iter().enumerate() {
                let mut x_train = at_time(&train_idx, p_train);
                // Train-scoped per-channel standardisation at this point.
                let means = x_train.mean_axis(Axis(0)).unwrap();
                let stds = x_train
                    .axis_iter(Axis(1))
                    .map(|col| {
                        let m = col.sum() / col.len() as f64;
                        let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                            / col.len() as f64;
                        v.sqrt().max(1e-12)
                    })
                    .collect::<Vec<f64>>();
                for mut row in x_train.rows_mut() {
                    for (c, v) in row.iter_mut().enumerate() {
                        *v = (*v - means[c]) / stds[c];
                    }
                }
                let spec = ClassifierSpec {
                    kind: ClassifierKind::LdaShrinkage,
                    seed: fold_seed,
                    params: ClassifierParams::default(),
                };
                let model = fit(&spec, x_train.view(), &train_labels)?;
                for (tj, &p_test) in points.iter().enumerate() {
                    let mut x_test = at_time(&test_idx, p_test);
                    for mut row in x_test.rows_mut() {
                        for (c, v) in row.iter_mut().enumerate() {
                            *v = (*v - means[c]) / stds[c];
                        }
                    }
                    let pred = model.predict(x_test.view());
                    let m = confusion_matrix(&test_labels, &pred, n_classes);
                    fold[[ti, tj]] = balanced_accuracy(&m)?.0;
                }
            }
            Ok(fold)
        })
        .collect();

    let fold_matrices = fold_matrices?;
    let mut matrix = Array2::<f64>::zeros((t_points, t_points));
    for m in &fold_matrices {
        matrix += m;
    }
    matrix /= fold_matrices.len() as f64;

    Ok(TgmResult {
        matrix,
        times,
        step,
    })
}
