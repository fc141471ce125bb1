//! Acquisition-format ingestion: EDF parsing and writing, BIDS-like
//! directory scans, epoch extraction, and the canonical epoch archive.
//! This is the only module that touches external file formats.

mod archive;
mod bids;
mod edf;

pub use archive::{read_archive, write_archive, ArchiveManifest};
pub use bids::scan_bids;
pub use edf::{parse_edf, parse_header, write_edf, EdfHeader, EdfWriteOptions, Recording, SignalHeader};

use std::collections::BTreeMap;

use ndarray::{Array3, Axis};

use crate::data::{EpochProvenance, EpochSet};
use crate::error::{Error, Result};

/// Cut stimulus-locked epochs out of a continuous recording.
///
/// Windows run from `tmin` to `tmax` seconds around each event whose label
/// appears in `label_map`; the epoch length is `round((tmax - tmin) · fs)`
/// samples. Events with labels absent from the map are an error (unknown
/// trigger codes should be filtered by the caller, not silently dropped).
pub fn epoch_from_events(
    rec: &Recording,
    tmin: f64,
    tmax: f64,
    label_map: &BTreeMap<String, usize>,
    subject_name: &str,
    recording_id: u32,
) -> Result<EpochSet> {
    if tmax <= tmin {
        return Err(Error::Invalid(format!("epoch window [{tmin}, {tmax}] is empty")));
    }
    let n_samples = ((tmax - tmin) * rec.fs).round() as usize;
    let (n_ch, n_time) = rec.samples.dim();
    let offset = (tmin * rec.fs).round() as i64;

    let mut data = Array3::<f64>::zeros((rec.events.len(), n_ch, n_samples));
    let mut labels = Vec::with_capacity(rec.events.len());
    let mut onsets = Vec::with_capacity(rec.events.len());

    for (ti, (sample, label)) in rec.events.iter().enumerate() {
        let class = *label_map.get(label).ok_or_else(|| {
            Error::Invalid(format!("event label {label:?} absent from label map"))
        })?;
        let start = sample + offset;
        let end = start + n_samples as i64;
        if start < 0 || end > n_time as i64 {
            return Err(Error::Invalid(format!(
                "epoch window [{start}, {end}) for event at sample {sample} out of bounds 0..{n_time}"
            )));
        }
        for c in 0..n_ch {
            for (k, t) in (start..end).enumerate() {
                data[[ti, c, k]] = rec.samples[[c, t as usize]];
            }
        }
        labels.push(class);
        onsets.push(*sample);
    }

    let n = labels.len();
    let epochs = EpochSet {
        data,
        labels,
        subjects: vec![0; n],
        subject_names: vec![subject_name.to_string()],
        fs: rec.fs,
        channel_names: rec.channel_names.clone(),
        provenance: EpochProvenance {
            stimulus_locked: true,
            window: (tmin, tmax),
            onsets: Some(onsets),
            recording_ids: Some(vec![recording_id; n]),
        },
    };
    epochs.validate()?;
    Ok(epochs)
}

/// Concatenate per-subject epoch sets into one pooled set.
///
/// Channel names, sampling rate, and epoch window must agree; subject
/// indices are re-based onto the merged subject list.
pub fn merge_epoch_sets(sets: &[EpochSet]) -> Result<EpochSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Empty("merge: no epoch sets".into()))?;
    for s in sets {
        if s.channel_names != first.channel_names {
            return Err(Error::Shape("merge: channel names differ".into()));
        }
        if (s.fs - first.fs).abs() > 1e-9 {
            return Err(Error::Shape("merge: sampling rates differ".into()));
        }
        if s.n_samples() != first.n_samples() {
            return Err(Error::Shape("merge: epoch lengths differ".into()));
        }
        if s.provenance.window != first.provenance.window {
            return Err(Error::Shape("merge: epoch windows differ".into()));
        }
    }

    let mut subject_names = Vec::new();
    let mut labels = Vec::new();
    let mut subjects = Vec::new();
    let mut onsets = Vec::new();
    let mut recording_ids = Vec::new();
    let mut have_onsets = true;
    let total: usize = sets.iter().map(|s| s.n_trials()).sum();
    let mut data = Array3::<f64>::zeros((total, first.n_channels(), first.n_samples()));

    let mut row = 0usize;
    for (set_idx, s) in sets.iter().enumerate() {
        let base: Vec<usize> = s
            .subject_names
            .iter()
            .map(|name| {
                if let Some(i) = subject_names.iter().position(|n| n == name) {
                    i
                } else {
                    subject_names.push(name.clone());
                    subject_names.len() - 1
                }
            })
            .collect();
        for t in 0..s.n_trials() {
            data.index_axis_mut(Axis(0), row)
                .assign(&s.data.index_axis(Axis(0), t));
            labels.push(s.labels[t]);
            subjects.push(base[s.subjects[t]]);
            match (&s.provenance.onsets, &s.provenance.recording_ids) {
                (Some(o), Some(r)) => {
                    onsets.push(o[t]);
                    // Offset recording ids per source set so they stay unique.
                    recording_ids.push(((set_idx as u32) << 16) | (r[t] & 0xffff));
                }
                _ => have_onsets = false,
            }
            row += 1;
        }
    }

    let stimulus_locked = sets.iter().all(|s| s.provenance.stimulus_locked);
    let merged = EpochSet {
        data,
        labels,
        subjects,
        subject_names,
        fs: first.fs,
        channel_names: first.channel_names.clone(),
        provenance: EpochProvenance {
            stimulus_locked,
            window: first.provenance.window,
            onsets: have_onsets.then_some(onsets),
            recording_ids: have_onsets.then_some(recording_ids),
        },
    };
    merged.validate()?;
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn rec_with_events(events: Vec<(i64, String)>) -> Recording {
        let mut samples = Array2::<f64>::zeros((2, 1024));
        for t in 0..1024 {
            samples[[0, t]] = t as f64;
            samples[[1, t]] = -(t as f64);
        }
        Recording {
            samples,
            fs: 256.0,
            channel_names: vec!["Cz".into(), "Pz".into()],
            events,
        }
    }

    fn vowel_map() -> BTreeMap<String, usize> {
        [("a", 0usize), ("e", 1), ("i", 2), ("o", 3), ("u", 4)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    #[test]
    fn epoch_window_at_256_hz_has_307_samples() {
        let rec = rec_with_events(vec![(200, "a".into()), (600, "i".into())]);
        let e = epoch_from_events(&rec, -0.2, 1.0, &vowel_map(), "S01", 0).unwrap();
        assert_eq!(e.n_samples(), 307);
        assert_eq!(e.n_trials(), 2);
        assert_eq!(e.labels, vec![0, 2]);
        // First sample of the epoch sits 0.2 s before the event.
        assert_eq!(e.data[[0, 0, 0]], (200 - 51) as f64);
    }

    #[test]
    fn zero_events_gives_empty_set() {
        let rec = rec_with_events(vec![]);
        let e = epoch_from_events(&rec, -0.2, 1.0, &vowel_map(), "S01", 0).unwrap();
        assert_eq!(e.n_trials(), 0);
    }

    #[test]
    fn early_event_is_out_of_bounds() {
        let rec = rec_with_events(vec![(10, "a".into())]);
        assert!(epoch_from_events(&rec, -0.2, 1.0, &vowel_map(), "S01", 0).is_err());
    }

    #[test]
    fn unknown_label_is_error() {
        let rec = rec_with_events(vec![(200, "mystery".into())]);
        assert!(epoch_from_events(&rec, -0.2, 1.0, &vowel_map(), "S01", 0).is_err());
    }

    #[test]
    fn merge_rebases_subjects() {
        let rec = rec_with_events(vec![(200, "a".into())]);
        let e1 = epoch_from_events(&rec, -0.2, 1.0, &vowel_map(), "S01", 0).unwrap();
        let e2 = epoch_from_events(&rec, -0.2, 1.0, &vowel_map(), "S02", 0).unwrap();
        let m = merge_epoch_sets(&[e1, e2]).unwrap();
        assert_eq!(m.subject_names, vec!["S01".to_string(), "S02".to_string()]);
        assert_eq!(m.subjects, vec![0, 1]);
    }

    #[test]
    fn merge_keeps_recording_ids_distinct_across_sets() {
        // Set 0 recording 1 and set 1 recording 0 must not collide, or the
        // epoch-overlap audit would compare onsets across different files.
        let rec = rec_with_events(vec![(200, "a".into()), (600, "e".into())]);
        let e1a = epoch_from_events(&rec, -0.2, 1.0, &vowel_map(), "S01", 0).unwrap();
        let e1b = epoch_from_events(&rec, -0.2, 1.0, &vowel_map(), "S01", 1).unwrap();
        let s1 = merge_epoch_sets(&[e1a, e1b]).unwrap();
        let e2 = epoch_from_events(&rec, -0.2, 1.0, &vowel_map(), "S02", 0).unwrap();
        let m = merge_epoch_sets(&[s1, e2]).unwrap();
        let ids = m.provenance.recording_ids.as_ref().unwrap();
        let mut distinct: Vec<u32> = ids.clone();
        distinct.sort_unstable();
        distinct.dedup();
        // Three distinct source recordings: (set0 rec0), (set0 rec1), (set1 rec0).
        assert_eq!(distinct.len(), 3, "ids {ids:?}");
    }
}
