//! Core data containers: epoch tensors and named feature matrices.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of vowel classes in the reference task.
pub const N_CLASSES: usize = 5;

/// Provenance of the epoching step, carried for the temporal-leakage audit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochProvenance {
    /// True when every epoch is locked to a stimulus event.
    pub stimulus_locked: bool,
    /// Epoch window relative to the event, seconds.
    pub window: (f64, f64),
    /// Per-trial event onset in samples of the source recording, when known.
    pub onsets: Option<Vec<i64>>,
    /// Per-trial source recording id (events from different recordings
    /// cannot overlap regardless of onset).
    pub recording_ids: Option<Vec<u32>>,
}

impl EpochProvenance {
    pub fn synthetic(window: (f64, f64)) -> Self {
        EpochProvenance {
            stimulus_locked: true,
            window,
            onsets: None,
            recording_ids: None,
        }
    }
}

/// Trials × channels × samples tensor with labels and subject ids — the
/// unit of all downstream work.
#[derive(Debug, Clone)]
pub struct EpochSet {
    /// `[trial][channel][sample]`, physical units (µV) unless normalised.
    pub data: Array3<f64>,
    /// Class id per trial, `0..N_CLASSES`.
    pub labels: Vec<usize>,
    /// Subject index per trial (into `subject_names`).
    pub subjects: Vec<usize>,
    pub subject_names: Vec<String>,
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub provenance: EpochProvenance,
}

impl EpochSet {
    pub fn n_trials(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_samples(&self) -> usize {
        self.data.dim().2
    }

    /// Validate the container invariants.
    pub fn validate(&self) -> Result<()> {
        let (t, c, _s) = self.data.dim();
        if self.labels.len() != t || self.subjects.len() != t {
            return Err(Error::Shape(format!(
                "epochs: {} trials but {} labels / {} subjects",
                t,
                self.labels.len(),
                self.subjects.len()
            )));
        }
        if self.channel_names.len() != c {
            return Err(Error::Shape(format!(
                "epochs: {} channels but {} channel names",
                c,
                self.channel_names.len()
            )));
        }
        if !(self.fs > 0.0) {
            return Err(Error::Invalid(format!("epochs: fs {} must be > 0", self.fs)));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= N_CLASSES) {
            return Err(Error::Invalid(format!(
                "epochs: label {bad} outside 0..{N_CLASSES}"
            )));
        }
        if let Some(&bad) = self.subjects.iter().find(|&&s| s >= self.subject_names.len()) {
            return Err(Error::Invalid(format!("epochs: subject index {bad} out of range")));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("epochs: non-finite sample".into()));
        }
        Ok(())
    }

    /// Select a subset of trials (preserving order).
    pub fn select_trials(&self, idx: &[usize]) -> EpochSet {
        let (_, c, s) = self.data.dim();
        let mut data = Array3::<f64>::zeros((idx.len(), c, s));
        for (new, &old) in idx.iter().enumerate() {
            data.index_axis_mut(ndarray::Axis(0), new)
                .assign(&self.data.index_axis(ndarray::Axis(0), old));
        }
        EpochSet {
            data,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            subjects: idx.iter().map(|&i| self.subjects[i]).collect(),
            subject_names: self.subject_names.clone(),
            fs: self.fs,
            channel_names: self.channel_names.clone(),
            provenance: EpochProvenance {
                stimulus_locked: self.provenance.stimulus_locked,
                window: self.provenance.window,
                onsets: self
                    .provenance
                    .onsets
                    .as_ref()
                    .map(|o| idx.iter().map(|&i| o[i]).collect()),
                recording_ids: self
                    .provenance
                    .recording_ids
                    .as_ref()
                    .map(|r| idx.iter().map(|&i| r[i]).collect()),
            },
        }
    }

    /// Trial indices belonging to the given subject index.
    pub fn trials_of_subject(&self, subject: usize) -> Vec<usize> {
        self.subjects
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == subject)
            .map(|(i, _)| i)
            .collect()
    }

    /// Distinct subject indices present, ascending.
    pub fn present_subjects(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.subjects.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Number of distinct classes present.
    pub fn present_classes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.labels.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Feature family tags used by the column registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    Bandpower,
    De,
    Hjorth,
    Temporal,
    Pca,
    Tangent,
}

impl std::fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FeatureFamily::Bandpower => "bandpower",
            FeatureFamily::De => "de",
            FeatureFamily::Hjorth => "hjorth",
            FeatureFamily::Temporal => "temporal",
            FeatureFamily::Pca => "pca",
            FeatureFamily::Tangent => "tangent",
        };
        f.write_str(s)
    }
}

/// Per-column feature provenance: family, source channel (when the feature
/// has a single-channel home), and the band or statistic it encodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub family: FeatureFamily,
    /// Channel index this column derives from; `None` for mixed-channel
    /// features (PCA components, tangent coordinates).
    pub channel: Option<usize>,
    /// Band name, statistic name, or component id.
    pub tag: String,
}

/// Trials × features matrix with a named column registry.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub registry: Vec<FeatureInfo>,
}

impl FeatureMatrix {
    pub fn n_trials(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.registry.len() != self.values.ncols() {
            return Err(Error::Shape(format!(
                "features: {} columns but {} registry entries",
                self.values.ncols(),
                self.registry.len()
            )));
        }
        Ok(())
    }

    /// Row subset, preserving the registry.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let d = self.values.ncols();
        let mut values = Array2::<f64>::zeros((idx.len(), d));
        for (new, &old) in idx.iter().enumerate() {
            values.row_mut(new).assign(&self.values.row(old));
        }
        FeatureMatrix {
            values,
            registry: self.registry.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EpochSet {
        EpochSet {
            data: Array3::zeros((3, 2, 4)),
            labels: vec![0, 1, 2],
            subjects: vec![0, 0, 1],
            subject_names: vec!["S01".into(), "S02".into()],
            fs: 256.0,
            channel_names: vec!["Cz".into(), "Pz".into()],
            provenance: EpochProvenance::synthetic((-0.2, 1.0)),
        }
    }

    #[test]
    fn validates_consistent_set() {
        assert!(tiny().validate().is_ok());
    }

    #[test]
    fn rejects_label_out_of_range() {
        let mut e = tiny();
        e.labels[0] = 9;
        assert!(e.validate().is_err());
    }

    #[test]
    fn select_trials_filters_in_lockstep() {
        let e = tiny();
        let s = e.select_trials(&[2, 0]);
        assert_eq!(s.labels, vec![2, 0]);
        assert_eq!(s.subjects, vec![1, 0]);
        assert_eq!(s.n_trials(), 2);
    }
}
