use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{all_records, BalanceMode, Paradigm};
use crate::dsp::PreprocessConfig;
use crate::model::{ModelSpec, TrainConfig};
use crate::stft::{AugmentConfig, StftConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub paradigm: Paradigm,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Required for the intra-patient paradigm.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub stratified: bool,
}

fn default_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceConfig {
    #[serde(default)]
    pub mode: Option<BalanceMode>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Always rejected by validation; present so that such a request fails loudly.
    #[serde(default)]
    pub apply_to_test: bool,
    #[serde(default)]
    pub augment: AugmentConfig,
}

/// Desk-scale caps on beats per class, applied after the split and before
/// balancing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsampleConfig {
    #[serde(default)]
    pub train_per_class: Option<usize>,
    #[serde(default)]
    pub test_per_class: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Architecture {
    Named(String),
    Custom(ModelSpec),
}

impl Architecture {
    pub fn spec(&self) -> Result<ModelSpec, PipelineError> {
        match self {
            Architecture::Named(name) => ModelSpec::by_name(name).ok_or_else(|| {
                PipelineError::Config(format!("model.arch: unknown architecture {name:?}"))
            }),
            Architecture::Custom(spec) => Ok(spec.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_arch")]
    pub arch: Architecture,
    /// Seeds both initialization and batch shuffling.
    pub seed: u64,
    /// Optional CPW1 file to start from instead of random initialization.
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_micro")]
    pub micro_batch: usize,
    #[serde(default = "default_true")]
    pub early_stop: bool,
}

fn default_arch() -> Architecture {
    Architecture::Named("compact".into())
}
fn default_batch() -> usize {
    500
}
fn default_epochs() -> usize {
    20
}
fn default_lr() -> f64 {
    1e-4
}
fn default_micro() -> usize {
    16
}
fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            lr: self.lr,
            seed: self.seed,
            micro_batch: self.micro_batch,
            early_stop: self.early_stop,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Adds specificity to the per-class table.
    #[serde(default)]
    pub specificity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_root: PathBuf,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Record subset; all 48 when absent.
    #[serde(default)]
    pub records: Option<Vec<u32>>,
    #[serde(default)]
    pub channel: usize,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    pub split: SplitConfig,
    #[serde(default)]
    pub stft: StftConfig,
    #[serde(default)]
    pub balance: BalanceConfig,
    #[serde(default)]
    pub subsample: SubsampleConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

impl PipelineConfig {
    /// Parses JSON; errors carry the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            PipelineError::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // relative paths are taken from the config file's directory
        if let Some(base) = path.parent() {
            for p in [&mut cfg.data_root, &mut cfg.output_dir] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            if let Some(c) = cfg.cache_dir.as_mut().filter(|c| c.is_relative()) {
                *c = base.join(&*c);
            }
            if let Some(w) = cfg.model.weights.as_mut().filter(|w| w.is_relative()) {
                *w = base.join(&*w);
            }
        }
        Ok(cfg)
    }

    pub fn cache_root(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn record_list(&self) -> Vec<u32> {
        self.records.clone().unwrap_or_else(all_records)
    }

    /// Applies `--records`, `--seed` and `--output`. The seed override sets
    /// every seed in the file.
    pub fn apply_overrides(
        &mut self,
        records: Option<Vec<u32>>,
        seed: Option<u64>,
        output: Option<PathBuf>,
    ) {
        if let Some(r) = records {
            self.records = Some(r);
        }
        if let Some(s) = seed {
            self.split.seed = Some(s);
            self.model.seed = s;
            if self.balance.mode.is_some() {
                self.balance.seed = Some(s);
            }
            if self.subsample.train_per_class.is_some() || self.subsample.test_per_class.is_some() {
                self.subsample.seed = Some(s);
            }
        }
        if let Some(o) = output {
            self.output_dir = o;
        }
    }

    /// Checks everything that does not need the data files.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let known = all_records();
        if let Some(rs) = &self.records {
            if rs.is_empty() {
                return bad("records: empty list".into());
            }
            if let Some(r) = rs.iter().find(|r| !known.contains(r)) {
                return bad(format!("records: {r} is not an MIT-BIH arrhythmia record"));
            }
        }
        if self.channel > 1 {
            return bad(format!(
                "channel: {} (records have channels 0 and 1)",
                self.channel
            ));
        }
        if !(self.preprocess.detrend_window_s > 0.0) {
            return bad("preprocess.detrend_window_s must be positive".into());
        }
        if self.balance.apply_to_test {
            return bad(
                "balance.apply_to_test: sampling may only be applied to the training side".into(),
            );
        }
        if self.balance.mode.is_some() && self.balance.seed.is_none() {
            return bad("balance.seed: required when balance.mode is set".into());
        }
        let s = &self.subsample;
        if (s.train_per_class.is_some() || s.test_per_class.is_some()) && s.seed.is_none() {
            return bad("subsample.seed: required when a per-class cap is set".into());
        }
        if s.train_per_class == Some(0) || s.test_per_class == Some(0) {
            return bad("subsample: per-class caps must be positive".into());
        }
        if !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            return bad(format!(
                "split.fraction: {} not in (0, 1)",
                self.split.fraction
            ));
        }
        if self.split.paradigm == Paradigm::IntraPatient && self.split.seed.is_none() {
            return bad("split.seed: required for the intra-patient paradigm".into());
        }
        self.stft
            .validate()
            .map_err(|e| PipelineError::Config(format!("stft: {e}")))?;
        self.model
            .arch
            .spec()?
            .validate()
            .map_err(|e| PipelineError::Config(format!("model.arch: {e}")))?;
        if self.model.batch_size == 0 || self.model.micro_batch == 0 {
            return bad("model: batch_size and micro_batch must be positive".into());
        }
        if !(self.model.lr > 0.0 && self.model.lr.is_finite()) {
            return bad(format!("model.lr: {}", self.model.lr));
        }
        if let Some(w) = &self.model.weights {
            if !w.is_file() {
                return bad(format!("model.weights: {} does not exist", w.display()));
            }
        }
        Ok(())
    }

    /// Configuration with machine-local paths removed, for the report hash.
    pub fn experiment_json(&self) -> String {
        let mut c = self.clone();
        c.data_root = PathBuf::new();
        c.output_dir = PathBuf::new();
        c.cache_dir = None;
        serde_json::to_string(&c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "data_root": "data",
        "output_dir": "out",
        "split": {"paradigm": "inter_patient"},
        "model": {"seed": 1}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = PipelineConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.stft.window_len, 512);
        assert_eq!(c.stft.hop, 8);
        assert_eq!(c.model.batch_size, 500);
        assert_eq!(c.model.max_epochs, 20);
        assert_eq!(c.model.lr, 1e-4);
        assert_eq!(c.split.fraction, 0.8);
        assert_eq!(c.record_list().len(), 48);
        c.validate().unwrap();
    }

    #[test]
    fn error_names_field_path() {
        let text = MINIMAL.replace(r#""seed": 1"#, r#""seed": 1, "lr": "fast""#);
        match PipelineConfig::from_json(&text).unwrap_err() {
            PipelineError::Config(m) => assert!(m.starts_with("model.lr"), "{m}"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace(
            r#""paradigm": "inter_patient""#,
            r#""paradigm": "inter_patient", "folds": 5"#,
        );
        match PipelineConfig::from_json(&text).unwrap_err() {
            PipelineError::Config(m) => assert!(m.contains("split") && m.contains("folds"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn test_side_balancing_rejected() {
        let text = MINIMAL.replace(
            r#""model""#,
            r#""balance": {"mode": "oversample", "seed": 3, "apply_to_test": true}, "model""#,
        );
        let c = PipelineConfig::from_json(&text).unwrap();
        assert!(
            matches!(c.validate(), Err(PipelineError::Config(m)) if m.contains("apply_to_test"))
        );
    }

    #[test]
    fn seeds_must_be_explicit() {
        let text = MINIMAL.replace("inter_patient", "intra_patient");
        let c = PipelineConfig::from_json(&text).unwrap();
        assert!(c.validate().is_err());
        let mut c2 = c.clone();
        c2.apply_overrides(None, Some(9), None);
        c2.validate().unwrap();
        assert_eq!(c2.split.seed, Some(9));
        let text = MINIMAL.replace(
            r#""model""#,
            r#""balance": {"mode": "undersample"}, "model""#,
        );
        assert!(PipelineConfig::from_json(&text)
            .unwrap()
            .validate()
            .is_err());
    }

    #[test]
    fn unknown_record_and_arch() {
        let mut c = PipelineConfig::from_json(MINIMAL).unwrap();
        c.records = Some(vec![100, 999]);
        assert!(c.validate().is_err());
        c.records = Some(vec![100, 101]);
        c.model.arch = Architecture::Named("vgg".into());
        assert!(c.validate().is_err());
        c.model.arch = Architecture::Named("resnet18".into());
        c.validate().unwrap();
    }

    #[test]
    fn experiment_hash_ignores_paths() {
        let a = PipelineConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = "/elsewhere".into();
        b.data_root = "/data".into();
        assert_eq!(a.experiment_json(), b.experiment_json());
        b.model.seed = 2;
        assert_ne!(a.experiment_json(), b.experiment_json());
    }
}
