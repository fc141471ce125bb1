//! Hand-crafted feature extraction: log band power, differential entropy,
//! Hjorth parameters, temporal statistics, concatenation, and train-scoped
//! PCA. At the reference 61-channel montage the four families give
//! 305 + 305 + 183 + 366 = 1159 columns.
//!
//! Extraction is strictly per-trial: no statistic crosses trial boundaries,
//! so permuting trials permutes feature rows identically.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{EpochSet, FeatureFamily, FeatureInfo, FeatureMatrix};
use crate::dsp;
use crate::error::{Error, Result};
use crate::linalg;

/// A named frequency band.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BandSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl BandSpec {
    pub fn new(name: &str, lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 < lo && lo < hi) {
            return Err(Error::Invalid(format!("band {name}: need 0 < lo < hi, got [{lo}, {hi}]")));
        }
        Ok(BandSpec {
            name: name.to_string(),
            lo,
            hi,
        })
    }
}

/// The five canonical EEG bands: δ 0.5–4, θ 4–8, α 8–13, β 13–30, γ 30–40 Hz.
pub fn default_bands() -> Vec<BandSpec> {
    vec![
        BandSpec::new("delta", 0.5, 4.0).unwrap(),
        BandSpec::new("theta", 4.0, 8.0).unwrap(),
        BandSpec::new("alpha", 8.0, 13.0).unwrap(),
        BandSpec::new("beta", 13.0, 30.0).unwrap(),
        BandSpec::new("gamma", 30.0, 40.0).unwrap(),
    ]
}

fn check_bands(bands: &[BandSpec], fs: f64) -> Result<()> {
    for b in bands {
        if b.hi >= fs / 2.0 {
            return Err(Error::Invalid(format!(
                "band {} upper edge {} at or above Nyquist {}",
                b.name,
                b.hi,
                fs / 2.0
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Band power (Welch)
// ---------------------------------------------------------------------------

/// Natural log of in-band power per (trial, channel, band), estimated with
/// Welch segments of 128 samples, 50% overlap, Hann window.
pub fn band_power(epochs: &EpochSet, bands: &[BandSpec]) -> Result<FeatureMatrix> {
    check_bands(bands, epochs.fs)?;
    let (n_trials, n_ch, n_samp) = epochs.data.dim();
    let spec = dsp::WelchSpec::default();
    let mut values = Array2::<f64>::zeros((n_trials, n_ch * bands.len()));
    let mut buf = vec![0.0f64; n_samp];
    for t in 0..n_trials {
        for c in 0..n_ch {
            for (s, b) in buf.iter_mut().enumerate() {
                *b = epochs.data[[t, c, s]];
            }
            let (freqs, psd) = dsp::welch_psd(&buf, epochs.fs, &spec)?;
            for (bi, band) in bands.iter().enumerate() {
                let p = dsp::band_power_from_psd(&freqs, &psd, band.lo, band.hi);
                values[[t, c * bands.len() + bi]] = p.max(1e-300).ln();
            }
        }
    }
    let registry = band_registry(FeatureFamily::Bandpower, n_ch, bands);
    Ok(FeatureMatrix { values, registry })
}

// ---------------------------------------------------------------------------
// Differential entropy
// ---------------------------------------------------------------------------

/// `½ ln(2πe σ²)` of the band-filtered signal per (trial, channel, band).
/// The band copy comes from a zero-phase order-4 Butterworth, so this is a
/// time-domain variance route, deliberately distinct from the Welch-based
/// band power.
pub fn differential_entropy(epochs: &EpochSet, bands: &[BandSpec]) -> Result<FeatureMatrix> {
    check_bands(bands, epochs.fs)?;
    let (n_trials, n_ch, n_samp) = epochs.data.dim();
    let filters: Vec<dsp::SosFilter> = bands
        .iter()
        .map(|b| dsp::butter_bandpass(b.lo, b.hi, epochs.fs, 4))
        .collect::<Result<_>>()?;
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;

    let mut values = Array2::<f64>::zeros((n_trials, n_ch * bands.len()));
    let mut buf = vec![0.0f64; n_samp];
    for t in 0..n_trials {
        for c in 0..n_ch {
            for (s, b) in buf.iter_mut().enumerate() {
                *b = epochs.data[[t, c, s]];
            }
            for (bi, filter) in filters.iter().enumerate() {
                let y = dsp::filtfilt(filter, &buf)?;
                let n = y.len() as f64;
                let mean = y.iter().sum::<f64>() / n;
                let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let var = var.max(1e-300);
                values[[t, c * bands.len() + bi]] = 0.5 * (two_pi_e * var).ln();
            }
        }
    }
    let registry = band_registry(FeatureFamily::De, n_ch, bands);
    Ok(FeatureMatrix { values, registry })
}

/// Differential entropy of a plain variance (closed form), used by tests
/// and cross-checks.
pub fn de_of_variance(var: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var.max(1e-300)).ln()
}

fn band_registry(family: FeatureFamily, n_ch: usize, bands: &[BandSpec]) -> Vec<FeatureInfo> {
    let mut registry = Vec::with_capacity(n_ch * bands.len());
    for c in 0..n_ch {
        for b in bands {
            registry.push(FeatureInfo {
                family,
                channel: Some(c),
                tag: b.name.clone(),
            });
        }
    }
    registry
}

// ---------------------------------------------------------------------------
// Hjorth parameters
// ---------------------------------------------------------------------------

/// Activity (variance), mobility (first-difference RMS ratio), and
/// complexity (mobility of the difference over mobility of the signal) per
/// channel: 3 columns per channel.
pub fn hjorth(epochs: &EpochSet) -> Result<FeatureMatrix> {
    let (n_trials, n_ch, n_samp) = epochs.data.dim();
    if n_samp < 3 {
        return Err(Error::Invalid("hjorth needs >= 3 samples".into()));
    }
    let mut values = Array2::<f64>::zeros((n_trials, n_ch * 3));
    for t in 0..n_trials {
        for c in 0..n_ch {
            let x: Vec<f64> = (0..n_samp).map(|s| epochs.data[[t, c, s]]).collect();
            let (activity, mobility, complexity) = hjorth_of(&x);
            values[[t, 3 * c]] = activity;
            values[[t, 3 * c + 1]] = mobility;
            values[[t, 3 * c + 2]] = complexity;
        }
    }
    let mut registry = Vec::with_capacity(n_ch * 3);
    for c in 0..n_ch {
        for tag in ["activity", "mobility", "complexity"] {
            registry.push(FeatureInfo {
                family: FeatureFamily::Hjorth,
                channel: Some(c),
                tag: tag.into(),
            });
        }
    }
    Ok(FeatureMatrix { values, registry })
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn first_diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

fn hjorth_of(x: &[f64]) -> (f64, f64, f64) {
    let activity = variance(x);
    if activity <= 0.0 {
        // Zero-activity channels carry no dynamics; report zeros.
        return (0.0, 0.0, 0.0);
    }
    let d1 = first_diff(x);
    let v1 = variance(&d1);
    let mobility = (v1 / activity).sqrt();
    if v1 <= 0.0 {
        return (activity, mobility, 0.0);
    }
    let d2 = first_diff(&d1);
    let v2 = variance(&d2);
    let mobility_d = (v2 / v1).sqrt();
    (activity, mobility, mobility_d / mobility)
}

// ---------------------------------------------------------------------------
// Temporal statistics
// ---------------------------------------------------------------------------

/// Mean, variance, skewness, excess kurtosis, max, min per channel
/// (population moment ratios): 6 columns per channel.
pub fn temporal_stats(epochs: &EpochSet) -> Result<FeatureMatrix> {
    let (n_trials, n_ch, n_samp) = epochs.data.dim();
    if n_samp < 4 {
        return Err(Error::Invalid("temporal stats need >= 4 samples".into()));
    }
    let mut values = Array2::<f64>::zeros((n_trials, n_ch * 6));
    for t in 0..n_trials {
        for c in 0..n_ch {
            let x: Vec<f64> = (0..n_samp).map(|s| epochs.data[[t, c, s]]).collect();
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
            let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
            let (skew, kurt) = if m2 <= 0.0 {
                (0.0, 0.0)
            } else {
                (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
            };
            let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let base = 6 * c;
            values[[t, base]] = mean;
            values[[t, base + 1]] = m2;
            values[[t, base + 2]] = skew;
            values[[t, base + 3]] = kurt;
            values[[t, base + 4]] = max;
            values[[t, base + 5]] = min;
        }
    }
    let mut registry = Vec::with_capacity(n_ch * 6);
    for c in 0..n_ch {
        for tag in ["mean", "variance", "skewness", "kurtosis", "max", "min"] {
            registry.push(FeatureInfo {
                family: FeatureFamily::Temporal,
                channel: Some(c),
                tag: tag.into(),
            });
        }
    }
    Ok(FeatureMatrix { values, registry })
}

// ---------------------------------------------------------------------------
// Concatenation
// ---------------------------------------------------------------------------

/// Column-wise concatenation preserving registries.
pub fn concat_features(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Empty("concat: no feature matrices".into()))?;
    let n = first.n_trials();
    for p in parts {
        p.validate()?;
        if p.n_trials() != n {
            return Err(Error::Shape(format!(
                "concat: trial counts differ ({} vs {n})",
                p.n_trials()
            )));
        }
    }
    let d: usize = parts.iter().map(|p| p.n_features()).sum();
    let mut values = Array2::<f64>::zeros((n, d));
    let mut registry = Vec::with_capacity(d);
    let mut col = 0;
    for p in parts {
        for j in 0..p.n_features() {
            values.column_mut(col).assign(&p.values.column(j));
            registry.push(p.registry[j].clone());
            col += 1;
        }
    }
    Ok(FeatureMatrix { values, registry })
}

/// Extract the configured families and concatenate them in canonical order
/// (band power, DE, Hjorth, temporal).
pub fn extract_families(
    epochs: &EpochSet,
    families: &[FeatureFamily],
    bands: &[BandSpec],
) -> Result<FeatureMatrix> {
    let mut parts = Vec::new();
    for fam in [
        FeatureFamily::Bandpower,
        FeatureFamily::De,
        FeatureFamily::Hjorth,
        FeatureFamily::Temporal,
    ] {
        if !families.contains(&fam) {
            continue;
        }
        parts.push(match fam {
            FeatureFamily::Bandpower => band_power(epochs, bands)?,
            FeatureFamily::De => differential_entropy(epochs, bands)?,
            FeatureFamily::Hjorth => hjorth(epochs)?,
            FeatureFamily::Temporal => temporal_stats(epochs)?,
            _ => unreachable!(),
        });
    }
    if parts.is_empty() {
        return Err(Error::Invalid("no extractable feature families requested".into()));
    }
    concat_features(&parts)
}

// ---------------------------------------------------------------------------
// PCA (train-scoped)
// ---------------------------------------------------------------------------

/// Principal components of a mean-centred training matrix.
#[derive(Debug, Clone)]
pub struct PcaModel {
    /// D × k, orthonormal columns.
    pub components: Array2<f64>,
    pub means: Array1<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub fit_scope: String,
}

/// Fit a k-component PCA on the training matrix only.
pub fn fit_pca(train: &FeatureMatrix, k: usize, fit_scope: &str) -> Result<PcaModel> {
    let (n, d) = train.values.dim();
    if n < 2 {
        return Err(Error::Invalid("pca: need >= 2 training rows".into()));
    }
    if k == 0 || k > d.min(n - 1) {
        return Err(Error::Invalid(format!(
            "pca: k = {k} out of range 1..=min(trials-1={}, D={d})",
            n - 1
        )));
    }
    let means = train.values.mean_axis(Axis(0)).unwrap();
    let centred = &train.values - &means.clone().insert_axis(Axis(0));

    // Eigendecompose the smaller Gram side.
    let (components, eigvals) = if d <= n {
        let cov = centred.t().dot(&centred) / (n as f64 - 1.0);
        let eig = linalg::sym_eig(&cov)?;
        let mut comp = Array2::<f64>::zeros((d, k));
        let mut vals = Vec::with_capacity(k);
        for j in 0..k {
            let src = d - 1 - j; // descending eigenvalues
            comp.column_mut(j).assign(&eig.eigenvectors.column(src));
            vals.push(eig.eigenvalues[src].max(0.0));
        }
        (comp, (eig.eigenvalues.to_vec(), vals))
    } else {
        let gram = centred.dot(&centred.t()) / (n as f64 - 1.0);
        let eig = linalg::sym_eig(&gram)?;
        let mut comp = Array2::<f64>::zeros((d, k));
        let mut vals = Vec::with_capacity(k);
        for j in 0..k {
            let src = n - 1 - j;
            let lambda = eig.eigenvalues[src].max(0.0);
            // v = Xᵀ u / sqrt(λ (n-1))
            let u = eig.eigenvectors.column(src);
            let v = centred.t().dot(&u);
            let norm = v.dot(&v).sqrt().max(1e-300);
            comp.column_mut(j).assign(&(&v / norm));
            vals.push(lambda);
        }
        (comp, (eig.eigenvalues.to_vec(), vals))
    };

    let (all_vals, kept_vals) = eigvals;
    let total: f64 = all_vals.iter().map(|v| v.max(0.0)).sum::<f64>().max(1e-300);
    let explained_variance_ratio = kept_vals.iter().map(|v| v / total).collect();

    let mut components = components;
    linalg::orthonormalize_columns(&mut components);

    Ok(PcaModel {
        components,
        means,
        explained_variance_ratio,
        fit_scope: fit_scope.to_string(),
    })
}

/// Project a feature matrix onto the fitted components (centred by the
/// training means).
pub fn apply_pca(model: &PcaModel, features: &FeatureMatrix) -> Result<FeatureMatrix> {
    let (_, d) = features.values.dim();
    if d != model.components.nrows() {
        return Err(Error::Shape(format!(
            "pca: model has {} input dims, data has {d}",
            model.components.nrows()
        )));
    }
    let centred = &features.values - &model.means.clone().insert_axis(Axis(0));
    let projected = centred.dot(&model.components);
    let registry = (0..model.components.ncols())
        .map(|j| FeatureInfo {
            family: FeatureFamily::Pca,
            channel: None,
            tag: format!("pc{j}"),
        })
        .collect();
    Ok(FeatureMatrix {
        values: projected,
        registry,
    })
}

/// Reconstruct the original space from a projection (for round-trip checks).
pub fn pca_reconstruct(model: &PcaModel, projected: &FeatureMatrix) -> Array2<f64> {
    projected.values.dot(&model.components.t()) + &model.means.clone().insert_axis(Axis(0))
}

/// Export a feature matrix as CSV with a registry header row. Columns are
/// named `family:channel:tag` (channel `-` for mixed-channel features).
pub fn export_csv(
    matrix: &FeatureMatrix,
    meta: &crate::report::RunMeta,
    path: &std::path::Path,
) -> Result<()> {
    matrix.validate()?;
    let columns: Vec<String> = matrix
        .registry
        .iter()
        .map(|info| {
            let channel = info
                .channel
                .map(|c| c.to_string())
                .unwrap_or_else(|| "-".into());
            format!("{}:{channel}:{}", info.family, info.tag)
        })
        .collect();
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows: Vec<Vec<crate::report::Cell>> = matrix
        .values
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|&v| crate::report::Cell::Num(v)).collect())
        .collect();
    crate::report::write_csv(path, meta, &column_refs, &rows)
}
