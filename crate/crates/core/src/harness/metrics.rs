//! Confusion-matrix metrics: balanced accuracy, macro-F1, Cohen's d.

use ndarray::Array2;

use crate::error::{Error, Result};

/// K×K confusion matrix: `m[true][pred]` counts.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((n_classes, n_classes));
    for (&t, &p) in y_true.iter().zip(y_pred.iter()) {
        m[[t, p]] += 1.0;
    }
    m
}

/// Mean per-class recall. Classes with an empty row are excluded from the
/// mean (reported via the second return value).
pub fn balanced_accuracy(confusion: &Array2<f64>) -> Result<(f64, Vec<usize>)> {
    let k = confusion.nrows();
    if confusion.iter().any(|&v| v < 0.0) {
        return Err(Error::Invalid("confusion counts must be nonnegative".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut empty = Vec::new();
    for c in 0..k {
        let row_total: f64 = confusion.row(c).sum();
        if row_total > 0.0 {
            sum += confusion[[c, c]] / row_total;
            n += 1;
        } else {
            empty.push(c);
        }
    }
    if n == 0 {
        return Err(Error::Empty("confusion matrix has no populated rows".into()));
    }
    Ok((sum / n as f64, empty))
}

/// Balanced accuracy straight from label vectors.
pub fn balanced_accuracy_labels(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> f64 {
    let m = confusion_matrix(y_true, y_pred, n_classes);
    balanced_accuracy(&m).map(|(b, _)| b).unwrap_or(0.0)
}

/// Macro-averaged F1 over classes present in truth or predictions
/// (absent-everywhere classes are skipped; 0/0 per-class F1 counts as 0).
pub fn macro_f1(confusion: &Array2<f64>) -> f64 {
    let k = confusion.nrows();
    let mut sum = 0.0;
    let mut n = 0usize;
    for c in 0..k {
        let tp = confusion[[c, c]];
        let row: f64 = confusion.row(c).sum();
        let col: f64 = confusion.column(c).sum();
        if row == 0.0 && col == 0.0 {
            continue;
        }
        let denom = row + col;
        sum += if denom > 0.0 { 2.0 * tp / denom } else { 0.0 };
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Row-normalised copy of a confusion matrix (rows sum to 1; empty rows
/// stay zero).
pub fn normalize_rows(confusion: &Array2<f64>) -> Array2<f64> {
    let mut out = confusion.clone();
    for mut row in out.rows_mut() {
        let sum: f64 = row.sum();
        if sum > 0.0 {
            row.mapv_inplace(|v| v / sum);
        }
    }
    out
}

/// Cohen's d of fold accuracies against chance: `(mean - chance) / sd`
/// with the sample standard deviation (ddof 1). Zero numerator gives 0
/// even when the spread is zero.
pub fn cohens_d(fold_accuracies: &[f64], chance: f64) -> Result<f64> {
    if fold_accuracies.len() < 2 {
        return Err(Error::Invalid("cohens_d: need >= 2 folds".into()));
    }
    let n = fold_accuracies.len() as f64;
    let mean = fold_accuracies.iter().sum::<f64>() / n;
    let var = fold_accuracies
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / (n - 1.0);
    let sd = var.sqrt();
    let diff = mean - chance;
    if diff.abs() < 1e-12 {
        return Ok(0.0);
    }
    if sd < 1e-12 {
        return Ok(if diff > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY });
    }
    Ok(diff / sd)
}
