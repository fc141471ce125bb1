//! The preprocessing chain: average re-reference, resampling, band-pass,
//! bad-channel zero-fill, peak-to-peak artifact rejection, baseline
//! correction, and training-fold-scoped z-score normalisation.
//!
//! Steps operate on continuous recordings where they precede epoching and
//! on [`EpochSet`]s otherwise; both variants share the same kernels.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::data::EpochSet;
use crate::dsp;
use crate::error::{Error, Result};
use crate::ingest::Recording;

/// Canonical step order of the chain. Descriptors recorded by pipelines are
/// audited against this sequence.
pub const CANONICAL_STEPS: [&str; 8] = [
    "rereference_average",
    "resample",
    "bandpass",
    "detect_bad_channels",
    "reject_artifacts",
    "epoch",
    "baseline_correct",
    "normalize",
];

/// Ordered record of the preprocessing steps a dataset went through.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineDescriptor {
    pub steps: Vec<String>,
}

impl PipelineDescriptor {
    pub fn record(&mut self, step: &str) {
        self.steps.push(step.to_string());
    }

    /// Verify the recorded steps are a subsequence of the canonical order.
    /// Epoching and rejection execute as one unit, so either order of the
    /// pair is canonical.
    pub fn verify_order(&self) -> Result<()> {
        let rank = |step: &str| -> Option<usize> {
            CANONICAL_STEPS.iter().position(|s| *s == step).map(|p| {
                // reject_artifacts (4) and epoch (5) share a rank.
                if p == 5 {
                    4
                } else {
                    p
                }
            })
        };
        let mut cursor = 0usize;
        for step in &self.steps {
            let pos = rank(step)
                .ok_or_else(|| Error::Invalid(format!("unknown pipeline step {step:?}")))?;
            if pos < cursor {
                return Err(Error::Invalid(format!(
                    "pipeline step {step:?} applied out of order"
                )));
            }
            cursor = pos;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Step 1: average reference
// ---------------------------------------------------------------------------

/// Subtract the instantaneous mean across channels from every channel.
pub fn rereference_recording(rec: &mut Recording) -> Result<()> {
    let (n_ch, n_time) = rec.samples.dim();
    if n_ch < 2 {
        return Err(Error::Invalid("average reference needs >= 2 channels".into()));
    }
    for t in 0..n_time {
        let mean = rec.samples.column(t).sum() / n_ch as f64;
        rec.samples.column_mut(t).mapv_inplace(|v| v - mean);
    }
    Ok(())
}

/// Average reference applied per epoch.
pub fn rereference_epochs(epochs: &mut EpochSet) -> Result<()> {
    let (n_trials, n_ch, n_samp) = epochs.data.dim();
    if n_ch < 2 {
        return Err(Error::Invalid("average reference needs >= 2 channels".into()));
    }
    for t in 0..n_trials {
        for s in 0..n_samp {
            let mut mean = 0.0;
            for c in 0..n_ch {
                mean += epochs.data[[t, c, s]];
            }
            mean /= n_ch as f64;
            for c in 0..n_ch {
                epochs.data[[t, c, s]] -= mean;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 2: resampling
// ---------------------------------------------------------------------------

pub fn resample_recording(rec: &Recording, target_fs: f64) -> Result<Recording> {
    if target_fs > rec.fs * (1.0 + 1e-6) {
        return Err(Error::Invalid(format!(
            "resample: target {target_fs} Hz above source {} Hz",
            rec.fs
        )));
    }
    let n_ch = rec.samples.nrows();
    let mut rows = Vec::with_capacity(n_ch);
    for c in 0..n_ch {
        let row: Vec<f64> = rec.samples.row(c).to_vec();
        rows.push(dsp::resample(&row, rec.fs, target_fs)?);
    }
    let n_out = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut samples = ndarray::Array2::<f64>::zeros((n_ch, n_out));
    for (c, row) in rows.iter().enumerate() {
        for (t, &v) in row.iter().enumerate() {
            samples[[c, t]] = v;
        }
    }
    let ratio = target_fs / rec.fs;
    let events = rec
        .events
        .iter()
        .map(|(s, l)| ((*s as f64 * ratio).round() as i64, l.clone()))
        .collect();
    Ok(Recording {
        samples,
        fs: target_fs,
        channel_names: rec.channel_names.clone(),
        events,
    })
}

// ---------------------------------------------------------------------------
// Step 3: band-pass
// ---------------------------------------------------------------------------

pub fn bandpass_recording(rec: &mut Recording, lo: f64, hi: f64, order: usize) -> Result<()> {
    let filter = dsp::butter_bandpass(lo, hi, rec.fs, order)?;
    let n_ch = rec.samples.nrows();
    for c in 0..n_ch {
        let row: Vec<f64> = rec.samples.row(c).to_vec();
        let filtered = dsp::filtfilt(&filter, &row)?;
        for (t, v) in filtered.into_iter().enumerate() {
            rec.samples[[c, t]] = v;
        }
    }
    Ok(())
}

/// Zero-phase band-pass applied independently per trial and channel.
pub fn bandpass_epochs(epochs: &mut EpochSet, lo: f64, hi: f64, order: usize) -> Result<()> {
    let filter = dsp::butter_bandpass(lo, hi, epochs.fs, order)?;
    let (n_trials, n_ch, n_samp) = epochs.data.dim();
    let mut buf = vec![0.0f64; n_samp];
    for t in 0..n_trials {
        for c in 0..n_ch {
            for (s, b) in buf.iter_mut().enumerate() {
                *b = epochs.data[[t, c, s]];
            }
            let filtered = dsp::filtfilt(&filter, &buf)?;
            for (s, v) in filtered.into_iter().enumerate() {
                epochs.data[[t, c, s]] = v;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 4: bad-channel detection
// ---------------------------------------------------------------------------

/// Flag channels whose log-variance z-score across channels exceeds
/// `z_thresh`, zero-filling them (no interpolation). Returns the flagged
/// channel indices; flagging every channel is legal and left to the caller
/// to warn about.
pub fn detect_bad_channels(epochs: &mut EpochSet, z_thresh: f64) -> Result<Vec<usize>> {
    let (_n_trials, n_ch, _n_samp) = epochs.data.dim();
    if n_ch < 2 {
        return Err(Error::Invalid("bad-channel detection needs >= 2 channels".into()));
    }
    let log_var: Vec<f64> = (0..n_ch)
        .map(|c| {
            let ch = epochs.data.index_axis(Axis(1), c);
            let n = ch.len() as f64;
            let mean = ch.sum() / n;
            let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            var.max(1e-300).ln()
        })
        .collect();
    let flagged = flag_by_z(&log_var, z_thresh);
    for &c in &flagged {
        epochs.data.index_axis_mut(Axis(1), c).fill(0.0);
    }
    Ok(flagged)
}

/// Recording-level variant (variance over continuous time).
pub fn detect_bad_channels_recording(rec: &mut Recording, z_thresh: f64) -> Result<Vec<usize>> {
    let (n_ch, _n_time) = rec.samples.dim();
    if n_ch < 2 {
        return Err(Error::Invalid("bad-channel detection needs >= 2 channels".into()));
    }
    let log_var: Vec<f64> = (0..n_ch)
        .map(|c| {
            let row = rec.samples.row(c);
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            var.max(1e-300).ln()
        })
        .collect();
    let flagged = flag_by_z(&log_var, z_thresh);
    for &c in &flagged {
        rec.samples.row_mut(c).fill(0.0);
    }
    Ok(flagged)
}

fn flag_by_z(values: &[f64], z_thresh: f64) -> Vec<usize> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-300);
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| (v - mean) / std > z_thresh)
        .map(|(i, _)| i)
        .collect()
}

// ---------------------------------------------------------------------------
// Step 5: artifact rejection
// ---------------------------------------------------------------------------

/// Drop epochs whose peak-to-peak amplitude exceeds `p2p_limit` on any
/// channel (strict inequality: exactly at the limit is kept). Labels and
/// subject ids are filtered in lockstep; trial order is preserved.
pub fn reject_artifacts(epochs: &EpochSet, p2p_limit: f64) -> Result<(EpochSet, Vec<usize>)> {
    if epochs.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("reject_artifacts: non-finite sample".into()));
    }
    let (n_trials, n_ch, _n_samp) = epochs.data.dim();
    let mut keep = Vec::new();
    let mut rejected = Vec::new();
    for t in 0..n_trials {
        let mut ok = true;
        let trial = epochs.data.index_axis(Axis(0), t);
        for c in 0..n_ch {
            let ch = trial.index_axis(Axis(0), c);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in ch.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > p2p_limit {
                ok = false;
                break;
            }
        }
        if ok {
            keep.push(t);
        } else {
            rejected.push(t);
        }
    }
    if keep.is_empty() && n_trials > 0 {
        return Err(Error::Empty(format!(
            "reject_artifacts: all {n_trials} trials exceed {p2p_limit} µV peak-to-peak"
        )));
    }
    Ok((epochs.select_trials(&keep), rejected))
}

// ---------------------------------------------------------------------------
// Step 7: baseline correction
// ---------------------------------------------------------------------------

/// Subtract, per trial and channel, the mean over the `[w0, w1]` window
/// (seconds relative to the stimulus event).
pub fn baseline_correct(epochs: &mut EpochSet, window: (f64, f64)) -> Result<()> {
    let (tmin, tmax) = epochs.provenance.window;
    let (w0, w1) = window;
    if w0 < tmin - 1e-9 || w1 > tmax + 1e-9 || w1 <= w0 {
        return Err(Error::Invalid(format!(
            "baseline window [{w0}, {w1}] outside epoch extent [{tmin}, {tmax}]"
        )));
    }
    let fs = epochs.fs;
    let n_samp = epochs.n_samples();
    let first = (((w0 - tmin) * fs).round() as usize).min(n_samp.saturating_sub(1));
    let last = (((w1 - tmin) * fs).round() as usize).clamp(first + 1, n_samp);

    let (n_trials, n_ch, _) = epochs.data.dim();
    for t in 0..n_trials {
        for c in 0..n_ch {
            let mut mean = 0.0;
            for s in first..last {
                mean += epochs.data[[t, c, s]];
            }
            mean /= (last - first) as f64;
            for s in 0..n_samp {
                epochs.data[[t, c, s]] -= mean;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 8: z-score normalisation (fold-scoped)
// ---------------------------------------------------------------------------

/// Per-channel z-score parameters fitted on one training fold.
///
/// `fit` and `apply` are distinct by construction: applying never updates
/// the statistics, so held-out data is transformed with training-fold
/// parameters only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Identifier of the training fold the parameters came from.
    pub fit_scope: String,
    /// Channels whose std was clamped to epsilon (zero-filled channels).
    pub clamped: Vec<usize>,
}

const STD_EPSILON: f64 = 1e-12;

pub fn fit_normalizer(train: &EpochSet, fit_scope: &str) -> Result<Normalizer> {
    if train.n_trials() == 0 {
        return Err(Error::Empty("fit_normalizer: empty training set".into()));
    }
    if fit_scope.is_empty() {
        return Err(Error::Invalid("fit_normalizer: fit_scope must be non-empty".into()));
    }
    let n_ch = train.n_channels();
    let mut mean = Vec::with_capacity(n_ch);
    let mut std = Vec::with_capacity(n_ch);
    let mut clamped = Vec::new();
    for c in 0..n_ch {
        let ch = train.data.index_axis(Axis(1), c);
        let n = ch.len() as f64;
        let m = ch.sum() / n;
        let v = ch.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        let s = v.sqrt();
        mean.push(m);
        if s < STD_EPSILON {
            std.push(STD_EPSILON);
            clamped.push(c);
        } else {
            std.push(s);
        }
    }
    Ok(Normalizer {
        mean,
        std,
        fit_scope: fit_scope.to_string(),
        clamped,
    })
}

pub fn apply_normalizer(norm: &Normalizer, epochs: &EpochSet) -> Result<EpochSet> {
    let n_ch = epochs.n_channels();
    if norm.mean.len() != n_ch {
        return Err(Error::Shape(format!(
            "normalizer fitted on {} channels, data has {n_ch}",
            norm.mean.len()
        )));
    }
    let (n_trials, _, n_samp) = epochs.data.dim();
    let mut out = epochs.clone();
    for t in 0..n_trials {
        for c in 0..n_ch {
            let m = norm.mean[c];
            let s = norm.std[c];
            for k in 0..n_samp {
                out.data[[t, c, k]] = (epochs.data[[t, c, k]] - m) / s;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parameters for the full chain
// ---------------------------------------------------------------------------

/// Chain parameters; defaults are the reference settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessParams {
    pub bandpass_lo: f64,
    pub bandpass_hi: f64,
    pub bandpass_order: usize,
    pub resample_fs: f64,
    pub bad_channel_z: f64,
    pub reject_p2p_uv: f64,
    pub epoch_tmin: f64,
    pub epoch_tmax: f64,
    pub baseline: (f64, f64),
}

impl Default for PreprocessParams {
    fn default() -> Self {
        PreprocessParams {
            bandpass_lo: 0.5,
            bandpass_hi: 40.0,
            bandpass_order: 4,
            resample_fs: 256.0,
            bad_channel_z: 3.0,
            reject_p2p_uv: 400.0,
            epoch_tmin: -0.2,
            epoch_tmax: 1.0,
            baseline: (-0.2, 0.0),
        }
    }
}

/// Run the recording-level steps (1–4), epoch around the events, reject
/// artifacts, and baseline-correct. Normalisation is fold-scoped and
/// belongs to the evaluation harness.
pub fn preprocess_recording(
    rec: &Recording,
    params: &PreprocessParams,
    label_map: &std::collections::BTreeMap<String, usize>,
    subject_name: &str,
    recording_id: u32,
    descriptor: &mut PipelineDescriptor,
) -> Result<(EpochSet, Vec<usize>)> {
    let mut rec = rec.clone();
    rereference_recording(&mut rec)?;
    descriptor.record("rereference_average");
    let mut rec = resample_recording(&rec, params.resample_fs)?;
    descriptor.record("resample");
    bandpass_recording(&mut rec, params.bandpass_lo, params.bandpass_hi, params.bandpass_order)?;
    descriptor.record("bandpass");
    detect_bad_channels_recording(&mut rec, params.bad_channel_z)?;
    descriptor.record("detect_bad_channels");

    let epochs = crate::ingest::epoch_from_events(
        &rec,
        params.epoch_tmin,
        params.epoch_tmax,
        label_map,
        subject_name,
        recording_id,
    )?;
    descriptor.record("epoch");
    let (mut epochs, rejected) = reject_artifacts(&epochs, params.reject_p2p_uv)?;
    descriptor.record("reject_artifacts");
    baseline_correct(&mut epochs, params.baseline)?;
    descriptor.record("baseline_correct");
    Ok((epochs, rejected))
}
