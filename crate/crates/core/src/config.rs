//! Run configuration: a strict TOML document (unknown keys rejected) with
//! sections for data, preprocessing, features, model, evaluation, stats,
//! analyses, and synthesis. Every output file records the SHA-256 of the
//! config bytes, so results are tamper-evident against the run that
//! produced them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analyses::FormantTable;
use crate::classify::ClassifierParams;
use crate::data::FeatureFamily;
use crate::error::{Error, Result};
use crate::harness::{LeakageInjection, ModelKind, PipelineSpec};
use crate::preprocess::PreprocessParams;
use crate::synth::SynthSpec;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub features: FeaturesConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
    pub stats: StatsConfig,
    pub analyses: AnalysesConfig,
    pub synth: SynthSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// "synth" | "archive" | "bids"
    pub source: String,
    /// Archive prefix (`<prefix>.json` + `<prefix>.f32`).
    pub archive: Option<PathBuf>,
    /// Root of a BIDS-like tree of EDF files.
    pub bids_root: Option<PathBuf>,
    /// Annotation label → class id, for EDF ingestion.
    pub label_map: BTreeMap<String, usize>,
    /// Subjects expected in the tree; missing ones are reported.
    pub expected_subjects: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: "synth".into(),
            archive: None,
            bids_root: None,
            label_map: BTreeMap::new(),
            expected_subjects: Vec::new(),
        }
    }
}

/// Preprocessing keys, grouped the way the run file spells them
/// (`bandpass.lo`, `resample.fs`, `reject.p2p_uv`, `epoch.tmin`, ...).
#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub bandpass: BandpassConfig,
    pub resample: ResampleConfig,
    pub reject: RejectConfig,
    pub epoch: EpochConfig,
    pub baseline: BaselineConfig,
    pub bad_channels: BadChannelConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BandpassConfig {
    pub lo: f64,
    pub hi: f64,
    pub order: usize,
}

impl Default for BandpassConfig {
    fn default() -> Self {
        BandpassConfig {
            lo: 0.5,
            hi: 40.0,
            order: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ResampleConfig {
    pub fs: f64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig { fs: 256.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RejectConfig {
    pub p2p_uv: f64,
}

impl Default for RejectConfig {
    fn default() -> Self {
        RejectConfig { p2p_uv: 400.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EpochConfig {
    pub tmin: f64,
    pub tmax: f64,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            tmin: -0.2,
            tmax: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub window: (f64, f64),
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            window: (-0.2, 0.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BadChannelConfig {
    pub z: f64,
}

impl Default for BadChannelConfig {
    fn default() -> Self {
        BadChannelConfig { z: 3.0 }
    }
}

impl PreprocessConfig {
    pub fn to_params(&self) -> PreprocessParams {
        PreprocessParams {
            bandpass_lo: self.bandpass.lo,
            bandpass_hi: self.bandpass.hi,
            bandpass_order: self.bandpass.order,
            resample_fs: self.resample.fs,
            bad_channel_z: self.bad_channels.z,
            reject_p2p_uv: self.reject.p2p_uv,
            epoch_tmin: self.epoch.tmin,
            epoch_tmax: self.epoch.tmax,
            baseline: self.baseline.window,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub families: Vec<FeatureFamily>,
    pub pca_k: Option<usize>,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            families: vec![FeatureFamily::De],
            pca_k: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub seed: Option<u64>,
    pub params: ClassifierParams,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Gbdt,
            seed: None,
            params: ClassifierParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// "loso" | "within_subject"
    pub protocol: String,
    /// Evaluate these kinds; empty means just `model.kind`.
    pub models: Vec<ModelKind>,
    pub seed: Option<u64>,
    pub strict_audit: bool,
    pub inject: LeakageInjection,
    pub k_folds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            protocol: "loso".into(),
            models: Vec::new(),
            seed: None,
            strict_audit: false,
            inject: LeakageInjection::None,
            k_folds: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub n_perm: usize,
    pub chance: Option<f64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            n_perm: 10_000,
            chance: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysesConfig {
    pub erp_channels: Vec<String>,
    pub n1_window_ms: (f64, f64),
    pub p2_window_ms: (f64, f64),
    pub dropout_ks: Vec<usize>,
    pub learning_ns: Vec<usize>,
    pub learning_reps: usize,
    pub tgm_step: usize,
    pub time_windows: Vec<(f64, f64)>,
    pub pca_grid: Vec<usize>,
    /// Region name → channel-name list (the counts come from the montage).
    pub regions: BTreeMap<String, Vec<String>>,
    pub formants: Option<FormantTable>,
}

impl Default for AnalysesConfig {
    fn default() -> Self {
        AnalysesConfig {
            erp_channels: vec!["Cz".into(), "FCz".into()],
            n1_window_ms: (80.0, 150.0),
            p2_window_ms: (150.0, 280.0),
            dropout_ks: vec![0, 1, 2, 4],
            learning_ns: vec![1, 3, 5, 7, 9, 11, 13, 15],
            learning_reps: 5,
            tgm_step: 4,
            time_windows: vec![
                (0.0, 1.0),
                (0.0, 0.2),
                (-0.2, 0.5),
                (-0.2, 1.0),
                (0.1, 0.6),
                (0.0, 0.5),
            ],
            pca_grid: vec![30, 50, 100, 200],
            regions: BTreeMap::new(),
            formants: None,
        }
    }
}

impl RunConfig {
    /// Parse and validate a config document.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<(RunConfig, String)> {
        let text = std::fs::read_to_string(path)?;
        let config = RunConfig::from_toml(&text)?;
        Ok((config, config_hash(&text)))
    }

    pub fn validate(&self) -> Result<()> {
        match self.data.source.as_str() {
            "synth" | "archive" | "bids" => {}
            other => {
                return Err(Error::Config(format!(
                    "data.source must be synth|archive|bids, got {other:?}"
                )))
            }
        }
        match self.eval.protocol.as_str() {
            "loso" | "within_subject" => {}
            other => {
                return Err(Error::Config(format!(
                    "eval.protocol must be loso|within_subject, got {other:?}"
                )))
            }
        }
        if self.data.source == "archive" && self.data.archive.is_none() {
            return Err(Error::Config("data.source=archive needs data.archive".into()));
        }
        if self.data.source == "bids" {
            if self.data.bids_root.is_none() {
                return Err(Error::Config("data.source=bids needs data.bids_root".into()));
            }
            if self.data.label_map.is_empty() {
                return Err(Error::Config("data.source=bids needs data.label_map".into()));
            }
        }
        self.synth.validate()?;
        if let Some(t) = &self.analyses.formants {
            t.validate()?;
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval.seed.unwrap_or_else(|| self.seed())
    }

    /// Models to evaluate (the `eval.models` list, falling back to
    /// `model.kind`).
    pub fn model_list(&self) -> Vec<ModelKind> {
        if self.eval.models.is_empty() {
            vec![self.model.kind]
        } else {
            self.eval.models.clone()
        }
    }

    /// Assemble the pipeline for one model kind.
    pub fn pipeline_for(&self, model: ModelKind) -> PipelineSpec {
        let mut p = PipelineSpec::new(model, self.model.seed.unwrap_or_else(|| self.eval_seed()));
        p.params = self.model.params.clone();
        p.families = self.features.families.clone();
        p.pca_k = self.features.pca_k;
        p.strict_audit = self.eval.strict_audit;
        p.injection = self.eval.inject;
        p
    }

    /// Data root override from the environment.
    pub fn effective_bids_root(&self) -> Option<PathBuf> {
        std::env::var_os("EEGBENCH_DATA_ROOT")
            .map(PathBuf::from)
            .or_else(|| self.data.bids_root.clone())
    }
}

/// First 16 hex chars of SHA-256 over the raw config bytes.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_parses_and_validates() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.seed(), 42);
        assert_eq!(c.model_list(), vec![ModelKind::Gbdt]);
        assert_eq!(c.preprocess.to_params(), PreprocessParams::default());
    }

    #[test]
    fn spec_keys_round_trip() {
        let text = r#"
seed = 7

[preprocess.bandpass]
lo = 1.0
hi = 30.0

[preprocess.resample]
fs = 128.0

[preprocess.reject]
p2p_uv = 350.0

[preprocess.epoch]
tmin = -0.1
tmax = 0.9

[preprocess.baseline]
window = [-0.1, 0.0]

[features]
families = ["de", "bandpower"]
pca_k = 30

[model]
kind = "random_forest"
seed = 9

[model.params]
n_estimators = 100

[eval]
protocol = "loso"
models = ["gbdt", "mdm_ea"]
strict_audit = true

[synth]
subjects = 4
trials_per_class = 3
channels = 8
"#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.seed(), 7);
        assert_eq!(c.preprocess.bandpass.lo, 1.0);
        assert_eq!(c.preprocess.resample.fs, 128.0);
        assert_eq!(c.preprocess.reject.p2p_uv, 350.0);
        assert_eq!(c.features.pca_k, Some(30));
        assert_eq!(c.model.params.n_estimators, 100);
        assert_eq!(c.model_list(), vec![ModelKind::Gbdt, ModelKind::MdmEa]);
        let p = c.pipeline_for(ModelKind::Gbdt);
        assert!(p.strict_audit);
        assert_eq!(p.seed, 9);
        assert_eq!(p.pca_k, Some(30));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("unknown_key = 1").is_err());
        assert!(RunConfig::from_toml("[model]\nmystery = true").is_err());
        assert!(RunConfig::from_toml("[preprocess.bandpass]\nlow = 0.5").is_err());
    }

    #[test]
    fn invalid_enums_are_rejected() {
        assert!(RunConfig::from_toml("[data]\nsource = \"nope\"").is_err());
        assert!(RunConfig::from_toml("[eval]\nprotocol = \"nope\"").is_err());
        assert!(RunConfig::from_toml("[model]\nkind = \"nope\"").is_err());
    }

    #[test]
    fn archive_source_requires_path() {
        assert!(RunConfig::from_toml("[data]\nsource = \"archive\"").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash("seed = 42\n");
        let b = config_hash("seed = 42\n");
        let c = config_hash("seed = 43\n");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn synth_plant_parses() {
        let text = r#"
[synth]
subjects = 2
trials_per_class = 2
channels = 4
snr = 1.0

[synth.plant]
kind = "band_amplitude"
lo = 8.0
hi = 13.0
channels = [0, 1]
"#;
        let c = RunConfig::from_toml(text).unwrap();
        match &c.synth.plant {
            crate::synth::PlantSpec::BandAmplitude { lo, hi, channels } => {
                assert_eq!((*lo, *hi), (8.0, 13.0));
                assert_eq!(channels, &vec![0, 1]);
            }
            other => panic!("unexpected plant {other:?}"),
        }
    }
}
