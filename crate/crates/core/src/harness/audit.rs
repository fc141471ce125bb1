//! The executable anti-leakage audit.
//!
//! Every fit-type operation in a fold logs an [`AuditRecord`] with the
//! subjects its data came from; the fold itself logs its train/test split
//! as actually used. Four checkpoints are then verified against the trail:
//!
//! 1. normalization leakage — pooled fit scopes (normalizer, PCA, geometric
//!    mean, classifier) are subsets of the fold's training side;
//! 2. validation-test confusion — validation splits never touch the held-out
//!    subject;
//! 3. subject contamination — train and test subject sets are disjoint, at
//!    trial granularity;
//! 4. temporal leakage — epochs are stimulus-locked and non-overlapping.
//!
//! Failures are verdicts carrying a witness record, not exceptions; strict
//! mode at the harness level converts them into errors.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::EpochSet;

/// Operations subject to the pooled train-side scoping rule.
pub const POOLED_FIT_OPS: [&str; 4] = [
    "normalizer.fit",
    "pca.fit",
    "geometric_mean.fit",
    "classifier.fit",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    pub operation: String,
    /// Fold this operation served (e.g. `fold=S03`).
    pub fit_scope: String,
    /// Subject indices of the data the operation consumed.
    pub subjects: BTreeSet<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldScope {
    pub fold_id: String,
    pub test_subject: usize,
    /// Subjects of the trials actually used for training.
    pub train_subjects: BTreeSet<usize>,
    /// Global trial indices used for training.
    pub train_trials: Vec<usize>,
    pub test_trials: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AuditTrail {
    pub records: Vec<AuditRecord>,
    pub folds: Vec<FoldScope>,
    /// Per-trial subject ids of the full dataset.
    pub trial_subjects: Vec<usize>,
    pub stimulus_locked: bool,
    /// Per-trial (recording id, onset sample) when known.
    pub trial_onsets: Option<Vec<(u32, i64)>>,
    /// Epoch length in samples (overlap check).
    pub epoch_samples: usize,
    /// Samples before the stimulus inside the epoch window.
    pub epoch_pre_samples: i64,
}

impl AuditTrail {
    pub fn from_epochs(epochs: &EpochSet) -> AuditTrail {
        let onsets = match (&epochs.provenance.onsets, &epochs.provenance.recording_ids) {
            (Some(o), Some(r)) => Some(r.iter().cloned().zip(o.iter().cloned()).collect()),
            _ => None,
        };
        AuditTrail {
            records: Vec::new(),
            folds: Vec::new(),
            trial_subjects: epochs.subjects.clone(),
            stimulus_locked: epochs.provenance.stimulus_locked,
            trial_onsets: onsets,
            epoch_samples: epochs.n_samples(),
            epoch_pre_samples: (-epochs.provenance.window.0 * epochs.fs).round() as i64,
        }
    }

    pub fn record(&mut self, operation: &str, fit_scope: &str, subjects: BTreeSet<usize>) {
        self.records.push(AuditRecord {
            operation: operation.to_string(),
            fit_scope: fit_scope.to_string(),
            subjects,
        });
    }

    /// Merge per-fold trails in fold order (deterministic reduction).
    pub fn merge(mut trails: Vec<AuditTrail>) -> AuditTrail {
        let mut base = if trails.is_empty() {
            AuditTrail::default()
        } else {
            trails.remove(0)
        };
        for t in trails {
            base.records.extend(t.records);
            base.folds.extend(t.folds);
        }
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Verdict {
    Pass,
    Fail { witness: String },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

pub const CHECKPOINT_NAMES: [&str; 4] = [
    "normalization leakage",
    "validation-test confusion",
    "subject contamination",
    "temporal leakage",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditVerdicts {
    /// One verdict per checkpoint, in [`CHECKPOINT_NAMES`] order.
    pub checkpoints: Vec<Verdict>,
}

impl AuditVerdicts {
    pub fn all_pass(&self) -> bool {
        self.checkpoints.iter().all(Verdict::passed)
    }

    pub fn first_failure(&self) -> Option<(usize, &str, &str)> {
        self.checkpoints.iter().enumerate().find_map(|(i, v)| match v {
            Verdict::Fail { witness } => Some((i + 1, CHECKPOINT_NAMES[i], witness.as_str())),
            Verdict::Pass => None,
        })
    }
}

/// Run the four checkpoints over a complete trail.
pub fn leakage_audit(trail: &AuditTrail) -> AuditVerdicts {
    let fold_by_id = |id: &str| trail.folds.iter().find(|f| f.fold_id == id);

    // Checkpoint 1: pooled fit scopes within the recorded training side.
    let mut cp1 = Verdict::Pass;
    'outer: for rec in &trail.records {
        if !POOLED_FIT_OPS.contains(&rec.operation.as_str()) {
            continue;
        }
        let Some(fold) = fold_by_id(&rec.fit_scope) else {
            cp1 = Verdict::Fail {
                witness: format!(
                    "operation {} refers to unknown fold {}",
                    rec.operation, rec.fit_scope
                ),
            };
            break 'outer;
        };
        let leaked: Vec<usize> = rec
            .subjects
            .difference(&fold.train_subjects)
            .cloned()
            .collect();
        if !leaked.is_empty() {
            cp1 = Verdict::Fail {
                witness: format!(
                    "operation {} in {} used subjects {leaked:?} outside the training fold",
                    rec.operation, rec.fit_scope
                ),
            };
            break 'outer;
        }
    }

    // Checkpoint 2: validation splits never include the held-out subject.
    let mut cp2 = Verdict::Pass;
    for rec in &trail.records {
        if rec.operation != "validation.split" {
            continue;
        }
        if let Some(fold) = fold_by_id(&rec.fit_scope) {
            if rec.subjects.contains(&fold.test_subject) {
                cp2 = Verdict::Fail {
                    witness: format!(
                        "validation split in {} includes held-out subject {}",
                        rec.fit_scope, fold.test_subject
                    ),
                };
                break;
            }
        }
    }

    // Checkpoint 3: train/test disjoint at subject and trial granularity.
    let mut cp3 = Verdict::Pass;
    'cp3: for fold in &trail.folds {
        if fold.train_subjects.contains(&fold.test_subject) {
            cp3 = Verdict::Fail {
                witness: format!(
                    "fold {} trains on its held-out subject {}",
                    fold.fold_id, fold.test_subject
                ),
            };
            break;
        }
        for &t in &fold.train_trials {
            if trail.trial_subjects.get(t) == Some(&fold.test_subject) {
                cp3 = Verdict::Fail {
                    witness: format!(
                        "fold {} training indices contain trial {t} of held-out subject {}",
                        fold.fold_id, fold.test_subject
                    ),
                };
                break 'cp3;
            }
        }
    }

    // Checkpoint 4: stimulus-locked, non-overlapping epochs.
    let mut cp4 = Verdict::Pass;
    if !trail.stimulus_locked {
        cp4 = Verdict::Fail {
            witness: "epochs are not stimulus-locked per archive metadata".into(),
        };
    } else if let Some(onsets) = &trail.trial_onsets {
        let mut by_recording: std::collections::BTreeMap<u32, Vec<i64>> =
            std::collections::BTreeMap::new();
        for (rec_id, onset) in onsets {
            by_recording.entry(*rec_id).or_default().push(*onset);
        }
        'cp4: for (rec_id, mut starts) in by_recording {
            starts.sort_unstable();
            for w in starts.windows(2) {
                // Epoch extents are [onset - pre, onset - pre + len).
                if w[1] - w[0] < trail.epoch_samples as i64 {
                    cp4 = Verdict::Fail {
                        witness: format!(
                            "recording {rec_id}: epochs at samples {} and {} overlap",
                            w[0], w[1]
                        ),
                    };
                    break 'cp4;
                }
            }
        }
    }

    AuditVerdicts {
        checkpoints: vec![cp1, cp2, cp3, cp4],
    }
}
