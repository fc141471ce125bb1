//! # eegbench — leakage-audited cross-subject EEG decoding benchmark
//!
//! A self-contained engine for five-class vowel decoding experiments on
//! multichannel EEG: EDF ingestion, an eight-step preprocessing chain,
//! hand-crafted feature extraction, Riemannian SPD machinery, classical
//! classifiers, a leave-one-subject-out harness with an executable
//! anti-leakage audit, and a nonparametric statistics battery.
//!
//! Everything is deterministic given the run seed: all randomness flows
//! through named-purpose seed derivation ([`rng::derive_seed`]), so results
//! are byte-identical across runs and thread counts.
//!
//! The crate is organised around the pipeline stages:
//!
//! ```text
//! ingest ─┐
//!         ├─ preprocess ─ features ──┐
//! synth ──┘             └─ riemann ──┼─ classify ─ harness ─ stats
//!                                    │                └─ analyses
//!                                    └──────────────────────┘
//! ```
//!
//! The `eegbench` binary (see `src/bin/eegbench.rs`) drives batch runs from
//! a TOML config; [`config`] and [`report`] hold the run-file plumbing.

pub mod analyses;
pub mod classify;
pub mod cli;
pub mod config;
pub mod data;
pub mod dsp;
pub mod error;
pub mod features;
pub mod harness;
pub mod ingest;
pub mod linalg;
pub mod preprocess;
pub mod report;
pub mod riemann;
pub mod rng;
pub mod stats;
pub mod synth;

pub use data::{EpochSet, FeatureMatrix};
pub use error::{Error, Result};

/// Crate version string stamped into every output file header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
