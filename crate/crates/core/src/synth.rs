//! Synthetic EEG with plantable class structure: pink/white noise epochs
//! with optional band-amplitude or transient-deflection plants, per-subject
//! gain variability, and an EDF fixture writer that exercises the ingest
//! path end to end.
//!
//! Null-plant datasets have labels independent of the data by construction,
//! which makes them the master negative control for the whole harness.

use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::{EpochProvenance, EpochSet, N_CLASSES};
use crate::dsp;
use crate::error::{Error, Result};
use crate::ingest::{write_edf, EdfWriteOptions, Recording};
use crate::rng::rng_for;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum PlantSpec {
    /// Labels carry no signal at all.
    None,
    /// Class k scales the in-band amplitude by `1 + k·snr` on the
    /// designated channels.
    BandAmplitude {
        lo: f64,
        hi: f64,
        channels: Vec<usize>,
    },
    /// Class-specific transient deflection at a fixed latency.
    TransientErp {
        latency_s: f64,
        width_s: f64,
        channels: Vec<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub subjects: usize,
    pub trials_per_class: usize,
    pub channels: usize,
    pub fs: f64,
    pub window: (f64, f64),
    /// Pink/white mix: 1.0 is pure 1/f.
    pub pink_fraction: f64,
    /// Baseline noise scale in µV.
    pub noise_uv: f64,
    pub plant: PlantSpec,
    pub snr: f64,
    /// Log-normal σ of the per-subject, per-channel gain.
    pub subject_gain_sigma: f64,
    /// Trials per subject spiked to ±500 µV (exercises artifact rejection).
    pub artifact_trials_per_subject: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            subjects: 16,
            trials_per_class: 20,
            channels: 61,
            fs: 256.0,
            window: (-0.2, 1.0),
            pink_fraction: 0.6,
            noise_uv: 10.0,
            plant: PlantSpec::None,
            snr: 0.0,
            subject_gain_sigma: 0.2,
            artifact_trials_per_subject: 0,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.trials_per_class == 0 || self.channels == 0 {
            return Err(Error::Invalid("synth: subjects, trials, channels must be >= 1".into()));
        }
        if self.snr < 0.0 {
            return Err(Error::Invalid("synth: snr must be >= 0".into()));
        }
        if !(self.fs > 0.0) || self.window.1 <= self.window.0 {
            return Err(Error::Invalid("synth: bad fs or window".into()));
        }
        if !(0.0..=1.0).contains(&self.pink_fraction) {
            return Err(Error::Invalid("synth: pink_fraction outside [0, 1]".into()));
        }
        match &self.plant {
            PlantSpec::BandAmplitude { lo, hi, channels } => {
                if !(0.0 < *lo && lo < hi) || *hi >= self.fs / 2.0 {
                    return Err(Error::Invalid("synth: bad plant band".into()));
                }
                if channels.iter().any(|&c| c >= self.channels) {
                    return Err(Error::Invalid("synth: plant channel out of range".into()));
                }
            }
            PlantSpec::TransientErp {
                latency_s,
                width_s,
                channels,
            } => {
                if *latency_s < self.window.0 || *latency_s > self.window.1 || *width_s <= 0.0 {
                    return Err(Error::Invalid("synth: plant latency outside window".into()));
                }
                if channels.iter().any(|&c| c >= self.channels) {
                    return Err(Error::Invalid("synth: plant channel out of range".into()));
                }
            }
            PlantSpec::None => {}
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        ((self.window.1 - self.window.0) * self.fs).round() as usize
    }
}

/// What was actually planted, for downstream assertions.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub planted_channels: Vec<usize>,
    /// Epoch sample index of the plant latency, when time-localised.
    pub latency_sample: Option<usize>,
    pub band: Option<(f64, f64)>,
}

/// Deterministic synthetic epoch set for a seed.
pub fn generate(spec: &SynthSpec) -> Result<(EpochSet, GroundTruth)> {
    spec.validate()?;
    let n_samp = spec.n_samples();
    let n_trials_per_subject = spec.trials_per_class * N_CLASSES;
    let n_trials = spec.subjects * n_trials_per_subject;
    let mut data = Array3::<f64>::zeros((n_trials, spec.channels, n_samp));
    let mut labels = Vec::with_capacity(n_trials);
    let mut subjects = Vec::with_capacity(n_trials);

    // Per-subject, per-channel log-normal gain.
    let gains: Vec<Vec<f64>> = (0..spec.subjects)
        .map(|s| {
            let mut rng = rng_for(spec.seed, "synth-gain", s as u64);
            let normal = Normal::new(0.0, spec.subject_gain_sigma.max(1e-12)).unwrap();
            (0..spec.channels)
                .map(|_| (normal.sample(&mut rng) as f64).exp())
                .collect()
        })
        .collect();

    let band_filter = match &spec.plant {
        PlantSpec::BandAmplitude { lo, hi, .. } => {
            Some(dsp::butter_bandpass(*lo, *hi, spec.fs, 4)?)
        }
        _ => None,
    };

    let mut trial_idx = 0usize;
    for s in 0..spec.subjects {
        for local in 0..n_trials_per_subject {
            let class = local % N_CLASSES;
            let mut rng = rng_for(spec.seed, "synth-trial", trial_idx as u64);
            for c in 0..spec.channels {
                let noise = colored_noise(n_samp, spec.pink_fraction, &mut rng);
                for (k, &v) in noise.iter().enumerate() {
                    data[[trial_idx, c, k]] = spec.noise_uv * gains[s][c] * v;
                }
            }
            match &spec.plant {
                PlantSpec::None => {}
                PlantSpec::BandAmplitude { channels, .. } => {
                    let filter = band_filter.as_ref().unwrap();
                    let amp = spec.noise_uv * 0.7 * (1.0 + class as f64 * spec.snr);
                    for &c in channels {
                        // Narrowband component: band-filtered white noise,
                        // re-normalised to unit variance before scaling.
                        let white = white_noise(n_samp + 64, &mut rng);
                        let banded = dsp::filtfilt(filter, &white)?;
                        let seg = &banded[32..32 + n_samp];
                        let var = seg.iter().map(|v| v * v).sum::<f64>() / n_samp as f64;
                        let norm = var.sqrt().max(1e-12);
                        for (k, &v) in seg.iter().enumerate() {
                            data[[trial_idx, c, k]] += amp * gains[s][c] * v / norm;
                        }
                    }
                }
                PlantSpec::TransientErp {
                    latency_s,
                    width_s,
                    channels,
                } => {
                    let centre = ((latency_s - spec.window.0) * spec.fs).round();
                    let sigma = (width_s * spec.fs / 2.0).max(1.0);
                    let amp = spec.noise_uv * spec.snr;
                    for (ci, &c) in channels.iter().enumerate() {
                        // Class-specific spatial signature: alternating sign
                        // pattern keyed by (class, channel position).
                        let sign = if (class >> (ci % 3)) & 1 == 0 { 1.0 } else { -1.0 };
                        let scale = 1.0 + 0.5 * ((class * 7 + ci * 3) % 5) as f64 / 4.0;
                        for k in 0..n_samp {
                            let t = (k as f64 - centre) / sigma;
                            data[[trial_idx, c, k]] +=
                                sign * scale * amp * (-0.5 * t * t).exp();
                        }
                    }
                }
            }
            labels.push(class);
            subjects.push(s);
            trial_idx += 1;
        }
    }

    let epochs = EpochSet {
        data,
        labels,
        subjects,
        subject_names: (1..=spec.subjects).map(|i| format!("S{i:02}")).collect(),
        fs: spec.fs,
        channel_names: default_channel_names(spec.channels),
        provenance: EpochProvenance::synthetic(spec.window),
    };
    epochs.validate()?;

    let truth = match &spec.plant {
        PlantSpec::None => GroundTruth {
            planted_channels: Vec::new(),
            latency_sample: None,
            band: None,
        },
        PlantSpec::BandAmplitude { lo, hi, channels } => GroundTruth {
            planted_channels: channels.clone(),
            latency_sample: None,
            band: Some((*lo, *hi)),
        },
        PlantSpec::TransientErp {
            latency_s, channels, ..
        } => GroundTruth {
            planted_channels: channels.clone(),
            latency_sample: Some(((latency_s - spec.window.0) * spec.fs).round() as usize),
            band: None,
        },
    };
    Ok((epochs, truth))
}

/// Standard-ish channel names: the vertex set first, then numbered sites.
pub fn default_channel_names(n: usize) -> Vec<String> {
    const NAMED: [&str; 12] = [
        "Cz", "FCz", "Fz", "Pz", "Oz", "C3", "C4", "F3", "F4", "P3", "P4", "POz",
    ];
    (0..n)
        .map(|i| {
            NAMED
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("E{:02}", i + 1))
        })
        .collect()
}

fn white_noise(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::new(0.0f64, 1.0).unwrap();
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Unit-variance pink/white mixture via spectral shaping (1/f amplitude,
/// random phase).
fn colored_noise(n: usize, pink_fraction: f64, rng: &mut impl Rng) -> Vec<f64> {
    let white = white_noise(n, rng);
    if pink_fraction <= 0.0 {
        return white;
    }
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let normal = Normal::new(0.0f64, 1.0).unwrap();
    for (k, slot) in spectrum.iter_mut().enumerate().take(n / 2 + 1).skip(1) {
        let amp = 1.0 / (k as f64).sqrt();
        let re = normal.sample(rng);
        let im = if k == n / 2 && n % 2 == 0 { 0.0 } else { normal.sample(rng) };
        *slot = Complex64::new(re * amp, im * amp);
    }
    for k in (n / 2 + 1)..n {
        spectrum[k] = spectrum[n - k].conj();
    }
    dsp::fft_inverse(&mut spectrum);
    let pink_raw: Vec<f64> = spectrum.iter().map(|c| c.re / n as f64).collect();
    let var = pink_raw.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let norm = var.sqrt().max(1e-12);
    let w = pink_fraction;
    pink_raw
        .iter()
        .zip(white.iter())
        .map(|(p, x)| w * p / norm + (1.0 - w) * x)
        .collect()
}

// ---------------------------------------------------------------------------
// EDF fixture
// ---------------------------------------------------------------------------

/// Write per-subject EDF files (with TAL event markers) under `root`,
/// returning the epoch set the files encode. The layout leaves an
/// inter-trial gap so that epoching at the configured window reproduces
/// one non-overlapping epoch per event.
pub fn make_edf_fixture(spec: &SynthSpec, root: &std::path::Path) -> Result<EpochSet> {
    spec.validate()?;
    let (epochs, _) = generate(spec)?;
    let n_samp = spec.n_samples();
    let pre = (-spec.window.0 * spec.fs).round() as usize; // samples before event
    let gap = (0.3 * spec.fs).round() as usize;
    let lead = (spec.fs.round() as usize).max(n_samp);

    let vowels = ["a", "e", "i", "o", "u"];
    for s in 0..spec.subjects {
        let name = &epochs.subject_names[s];
        let trials = epochs.trials_of_subject(s);
        // Round up to whole seconds so the writer can use 1-second EDF
        // records; the sampling rate then survives the fixed-width header.
        let fs_round = spec.fs.round().max(1.0) as usize;
        let raw_time = lead * 2 + trials.len() * (n_samp + gap);
        let n_time = raw_time.div_ceil(fs_round) * fs_round;
        let mut samples = ndarray::Array2::<f64>::zeros((spec.channels, n_time));

        // Low-level background so the recording is not silent between trials.
        let mut rng = rng_for(spec.seed, "synth-edf-bg", s as u64);
        let normal = Normal::new(0.0f64, 1.0).unwrap();
        for v in samples.iter_mut() {
            *v = 0.5 * normal.sample(&mut rng);
        }

        let mut events = Vec::with_capacity(trials.len());
        for (slot, &t) in trials.iter().enumerate() {
            let start = lead + slot * (n_samp + gap);
            let onset = (start + pre) as i64;
            for c in 0..spec.channels {
                for k in 0..n_samp {
                    samples[[c, start + k]] = epochs.data[[t, c, k]];
                }
            }
            if spec.artifact_trials_per_subject > 0 && slot < spec.artifact_trials_per_subject {
                // ±500 µV spike in the middle of the epoch window.
                samples[[0, start + n_samp / 2]] = 500.0;
                samples[[0, start + n_samp / 2 + 1]] = -500.0;
            }
            events.push((onset, format!("vowel/{}", vowels[epochs.labels[t]])));
        }

        let rec = Recording {
            samples,
            fs: spec.fs,
            channel_names: epochs.channel_names.clone(),
            events,
        };
        let bytes = write_edf(&rec, &EdfWriteOptions::default())?;
        let dir = root.join(name);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("{name}_task-vowel_eeg.edf")), bytes)?;
    }
    Ok(epochs)
}

/// The label map matching [`make_edf_fixture`]'s annotations.
pub fn fixture_label_map() -> std::collections::BTreeMap<String, usize> {
    ["a", "e", "i", "o", "u"]
        .iter()
        .enumerate()
        .map(|(k, v)| (format!("vowel/{v}"), k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            subjects: 2,
            trials_per_class: 2,
            channels: 4,
            fs: 256.0,
            ..Default::default()
        }
    }

    #[test]
    fn generate_shapes_and_labels() {
        let (e, _) = generate(&small_spec()).unwrap();
        assert_eq!(e.n_trials(), 2 * 2 * 5);
        assert_eq!(e.n_channels(), 4);
        assert_eq!(e.n_samples(), 307);
        // Balanced classes per subject.
        for s in 0..2 {
            for k in 0..5 {
                let count = e
                    .trials_of_subject(s)
                    .iter()
                    .filter(|&&t| e.labels[t] == k)
                    .count();
                assert_eq!(count, 2);
            }
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let (a, _) = generate(&small_spec()).unwrap();
        let (b, _) = generate(&small_spec()).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn different_seeds_differ() {
        let mut spec = small_spec();
        let (a, _) = generate(&spec).unwrap();
        spec.seed = 43;
        let (b, _) = generate(&spec).unwrap();
        assert_ne!(a.data, b.data);
    }

    #[test]
    fn band_plant_raises_alpha_power_with_class() {
        let spec = SynthSpec {
            subjects: 2,
            trials_per_class: 10,
            channels: 4,
            plant: PlantSpec::BandAmplitude {
                lo: 8.0,
                hi: 13.0,
                channels: vec![0, 1],
            },
            snr: 1.0,
            subject_gain_sigma: 0.0,
            ..Default::default()
        };
        let (e, truth) = generate(&spec).unwrap();
        assert_eq!(truth.planted_channels, vec![0, 1]);
        // Mean alpha-band variance on a planted channel grows with class.
        let filter = dsp::butter_bandpass(8.0, 13.0, 256.0, 4).unwrap();
        let mut class_var = [0.0f64; 5];
        let mut class_n = [0usize; 5];
        for t in 0..e.n_trials() {
            let x: Vec<f64> = (0..e.n_samples()).map(|k| e.data[[t, 0, k]]).collect();
            let y = dsp::filtfilt(&filter, &x).unwrap();
            let var = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
            class_var[e.labels[t]] += var;
            class_n[e.labels[t]] += 1;
        }
        for k in 0..5 {
            class_var[k] /= class_n[k] as f64;
        }
        assert!(
            class_var[4] > 3.0 * class_var[0],
            "class alpha variances {class_var:?}"
        );
    }

    #[test]
    fn erp_plant_peaks_at_latency() {
        let spec = SynthSpec {
            subjects: 1,
            trials_per_class: 8,
            channels: 4,
            plant: PlantSpec::TransientErp {
                latency_s: 0.15,
                width_s: 0.05,
                channels: vec![0, 1, 2, 3],
            },
            snr: 4.0,
            subject_gain_sigma: 0.0,
            ..Default::default()
        };
        let (e, truth) = generate(&spec).unwrap();
        let latency = truth.latency_sample.unwrap();
        assert_eq!(latency, ((0.15f64 + 0.2) * 256.0).round() as usize);
        // Class-mean difference across the epoch peaks near the latency.
        let n_samp = e.n_samples();
        let mut mean0 = vec![0.0f64; n_samp];
        let mut mean4 = vec![0.0f64; n_samp];
        let (mut n0, mut n4) = (0.0, 0.0);
        for t in 0..e.n_trials() {
            match e.labels[t] {
                0 => {
                    for (k, m) in mean0.iter_mut().enumerate() {
                        *m += e.data[[t, 0, k]];
                    }
                    n0 += 1.0;
                }
                4 => {
                    for (k, m) in mean4.iter_mut().enumerate() {
                        *m += e.data[[t, 0, k]];
                    }
                    n4 += 1.0;
                }
                _ => {}
            }
        }
        let diff: Vec<f64> = mean0
            .iter()
            .zip(mean4.iter())
            .map(|(a, b)| (a / n0 - b / n4).abs())
            .collect();
        let peak = diff
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(
            (peak as i64 - latency as i64).abs() <= 8,
            "difference peak at {peak}, planted {latency}"
        );
    }

    #[test]
    fn edf_fixture_roundtrips_structure() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec();
        let epochs = make_edf_fixture(&spec, dir.path()).unwrap();

        let found = crate::ingest::scan_bids(dir.path()).unwrap();
        assert_eq!(found.len(), 2);
        assert_eq!(found[0].0, "S01");
        assert_eq!(found[0].1.len(), 1);

        // Parse one subject back and epoch it.
        let bytes = std::fs::read(&found[0].1[0]).unwrap();
        let rec = crate::ingest::parse_edf(&bytes).unwrap();
        let map = fixture_label_map();
        let back =
            crate::ingest::epoch_from_events(&rec, -0.2, 1.0, &map, "S01", 0).unwrap();
        assert_eq!(back.n_trials(), 10);
        assert_eq!(back.n_samples(), 307);
        let expect_labels: Vec<usize> = epochs
            .trials_of_subject(0)
            .iter()
            .map(|&t| epochs.labels[t])
            .collect();
        assert_eq!(back.labels, expect_labels);

        // Sample values survive the EDF quantisation.
        let orig_trials = epochs.trials_of_subject(0);
        let quantum = 2.0 * 3276.8 / 65535.0;
        for (bt, &ot) in orig_trials.iter().enumerate().map(|(i, t)| (i, t)) {
            for c in 0..epochs.n_channels() {
                for k in (0..epochs.n_samples()).step_by(37) {
                    let a = epochs.data[[ot, c, k]];
                    let b = back.data[[bt, c, k]];
                    assert!((a - b).abs() <= quantum, "mismatch {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn artifact_trial_is_rejected_downstream() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            subjects: 1,
            trials_per_class: 2,
            channels: 3,
            artifact_trials_per_subject: 1,
            ..Default::default()
        };
        make_edf_fixture(&spec, dir.path()).unwrap();
        let found = crate::ingest::scan_bids(dir.path()).unwrap();
        let bytes = std::fs::read(&found[0].1[0]).unwrap();
        let rec = crate::ingest::parse_edf(&bytes).unwrap();
        let back =
            crate::ingest::epoch_from_events(&rec, -0.2, 1.0, &fixture_label_map(), "S01", 0)
                .unwrap();
        let (kept, rejected) = crate::preprocess::reject_artifacts(&back, 400.0).unwrap();
        assert_eq!(rejected.len(), 1);
        assert_eq!(kept.n_trials(), 9);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small_spec();
        s.snr = -1.0;
        assert!(s.validate().is_err());

        let mut s = small_spec();
        s.plant = PlantSpec::BandAmplitude {
            lo: 8.0,
            hi: 13.0,
            channels: vec![99],
        };
        assert!(s.validate().is_err());

        let mut s = small_spec();
        s.plant = PlantSpec::TransientErp {
            latency_s: 5.0,
            width_s: 0.05,
            channels: vec![0],
        };
        assert!(s.validate().is_err());
    }
}
