use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::data::{generate_synthetic_dataset, Dataset, SynthDomain, SynthSpec};
use crate::error::{Error, Result};
use crate::models::{GbmConfig, ModelSpec, DEFAULT_NEGATIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferMode {
    /// Train and evaluate on the source domain.
    None,
    /// Train on the source, evaluate on the target.
    Direct,
    /// Train on the source, then keep training every parameter on the target.
    Sequential,
    /// Shared encoder with one classifier head per domain.
    MultiTarget,
}

impl fmt::Display for TransferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferMode::None => "none",
            TransferMode::Direct => "direct",
            TransferMode::Sequential => "sequential",
            TransferMode::MultiTarget => "multi-target",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Neural,
    Gbm,
}

/// Where a domain's train/dev/test splits come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Directory holding `train.jsonl`, `dev.jsonl` and `test.jsonl`.
    Dir(PathBuf),
    /// Template-generated pairs.
    Synthetic(SynthSpec),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SynthSpec::default())
    }
}

impl DataSource {
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DataSource::Dir(p) => Dataset::load_dir(p),
            DataSource::Synthetic(spec) => generate_synthetic_dataset(spec, seed),
        }
    }

    /// Short domain label used in reports.
    pub fn domain_name(&self) -> String {
        match self {
            DataSource::Dir(p) => {
                p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
            }
            DataSource::Synthetic(spec) => {
                let d = match spec.domain {
                    SynthDomain::Clinical => "clinical",
                    SynthDomain::General => "general",
                };
                if spec.planted_artifact {
                    format!("synthetic-{d}-planted")
                } else {
                    format!("synthetic-{d}")
                }
            }
        }
    }
}

/// One experiment: a model, its data, the transfer regime and the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub learner: Learner,
    pub model: ModelSpec,
    pub gbm: GbmConfig,
    /// Word vectors in text format; hashed random vectors when absent.
    pub embeddings: Option<PathBuf>,
    /// Concept graph (JSONL); the bundled demo graph when absent.
    pub ontology: Option<PathBuf>,
    pub source: DataSource,
    pub target: Option<DataSource>,
    pub transfer: TransferMode,
    /// Adam state carries over into sequential fine-tuning instead of resetting.
    pub carry_optimizer: bool,
    pub seeds: Vec<u64>,
    /// Seed of synthetic data generation; the target domain uses `data_seed + 1`.
    pub data_seed: u64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Vocabulary frequency cutoff over the training splits.
    pub min_count: usize,
    pub negations: Vec<String>,
    /// Seeds trained concurrently.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            learner: Learner::Neural,
            model: ModelSpec::default(),
            gbm: GbmConfig::default(),
            embeddings: None,
            ontology: None,
            source: DataSource::default(),
            target: None,
            transfer: TransferMode::None,
            carry_optimizer: false,
            seeds: (1..=6).collect(),
            data_seed: 1,
            patience: 5,
            max_epochs: 50,
            batch_size: 32,
            optimizer: AdamConfig::default(),
            min_count: 1,
            negations: DEFAULT_NEGATIONS.iter().map(|s| s.to_string()).collect(),
            workers: 1,
        }
    }
}

fn bad(key: &str, message: &str) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(bad("name", "must be a non-empty plain directory name"));
        }
        self.model.validate()?;
        if self.seeds.is_empty() {
            return Err(bad("seeds", "needs at least one seed"));
        }
        if self.patience == 0 {
            return Err(bad("patience", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(bad("max_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be at least 1"));
        }
        if self.min_count == 0 {
            return Err(bad("min_count", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(bad("workers", "must be at least 1"));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(bad("optimizer.lr", "must be positive"));
        }
        if self.gbm.max_depth == 0 {
            return Err(bad("gbm.max_depth", "must be at least 1"));
        }
        match (self.transfer, &self.target) {
            (TransferMode::None, _) => {}
            (_, None) => return Err(bad("target", "transfer modes other than `none` need a target domain")),
            _ => {}
        }
        if self.learner == Learner::Gbm && !matches!(self.transfer, TransferMode::None | TransferMode::Direct) {
            return Err(bad("transfer", "the boosting learner supports only `none` and `direct`"));
        }
        Ok(())
    }

    /// Reads a JSON config, applies `key=value` overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base = match path {
            Some(p) => serde_json::from_str(&crate::error::read_to_string(p)?)?,
            None => serde_json::Value::Object(Default::default()),
        };
        let cfg: ExperimentConfig = from_value_with_overrides(base, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn adam(&self) -> AdamConfig {
        self.optimizer
    }
}

/// Applies dotted `key=value` overrides to a JSON value, then deserializes.
/// Values parse as JSON when possible and as strings otherwise.
pub fn from_value_with_overrides<T: serde::de::DeserializeOwned>(
    mut value: serde_json::Value,
    overrides: &[String],
) -> Result<T> {
    for ov in overrides {
        let (key, raw) = ov.split_once('=').ok_or_else(|| bad(ov, "override must look like key=value"))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        set_path(&mut value, key, parsed)?;
    }
    serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        Error::Config {
            key: unknown_field(&msg).unwrap_or_else(|| "config".into()),
            message: msg,
        }
    })
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

fn set_path(root: &mut serde_json::Value, key: &str, value: serde_json::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad(key, "empty path segment"));
    }
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        if !cur.is_object() {
            return Err(bad(key, "path runs through a non-object value"));
        }
        cur = cur
            .as_object_mut()
            .expect("checked object")
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
        if cur.is_null() {
            *cur = serde_json::Value::Object(Default::default());
        }
    }
    match cur.as_object_mut() {
        Some(map) => {
            map.insert(parts[parts.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(bad(key, "path runs through a non-object value")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.patience, 5);
        assert_eq!(cfg.seeds.len(), 6);
    }

    #[test]
    fn unknown_key_is_named() {
        let v = serde_json::json!({"model": {"hiden": 3}});
        let err = from_value_with_overrides::<ExperimentConfig>(v, &[]).unwrap_err();
        match err {
            Error::Config { key, message } => {
                assert_eq!(key, "hiden");
                assert!(message.contains("hiden"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn dotted_overrides() {
        let cfg: ExperimentConfig = from_value_with_overrides(
            serde_json::json!({}),
            &[
                "model.hidden=7".into(),
                "name=abc".into(),
                "seeds=[3]".into(),
                "transfer=direct".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.hidden, 7);
        assert_eq!(cfg.name, "abc");
        assert_eq!(cfg.seeds, [3]);
        assert_eq!(cfg.transfer, TransferMode::Direct);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sources_roundtrip() {
        let cfg = ExperimentConfig {
            target: Some(DataSource::Dir("data/med".into())),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        assert_eq!(cfg.target.unwrap().domain_name(), "med");
    }

    #[test]
    fn zero_patience_rejected() {
        let cfg = ExperimentConfig {
            patience: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { key, .. }) if key == "patience"));
    }
}
