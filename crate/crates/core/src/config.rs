//! Run configuration: one TOML file with sections, patched by command-line
//! overrides before it is deserialized.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assignment::LossMode;
use crate::error::{Error, Result};
use crate::inference::{DecodeMode, DEFAULT_MAX_SPAN_LEN};
use crate::neural::ModelConfig;
use crate::prompting::PromptVariant;
use crate::train::TrainSettings;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    /// Built from the training split when absent.
    pub ontology: Option<PathBuf>,
    /// Built from the training split when absent.
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rates: Vec<f64>,
    pub warmup_fraction: f64,
    pub grad_clip: f64,
    pub weight_decay: f64,
    pub seeds: Vec<u64>,
    pub eval_every: usize,
}

impl Default for Training {
    fn default() -> Self {
        let t = TrainSettings::default();
        Training {
            batch_size: t.batch_size,
            steps: t.steps,
            learning_rates: vec![1e-4, 3e-4],
            warmup_fraction: t.warmup_fraction,
            grad_clip: t.grad_clip,
            weight_decay: t.weight_decay,
            seeds: vec![t.seed],
            eval_every: t.eval_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Fraction of the training split kept (few-shot runs).
    pub ratio: f64,
    pub shuffle_gold: bool,
    /// Encoder length cap, markers included.
    pub max_len: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            ratio: 1.0,
            shuffle_gold: false,
            max_len: 192,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub max_span_len: usize,
    pub sequential_mode: bool,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            max_span_len: DEFAULT_MAX_SPAN_LEN,
            sequential_mode: false,
        }
    }
}

impl InferenceSection {
    pub fn mode(&self) -> DecodeMode {
        if self.sequential_mode {
            DecodeMode::Sequential
        } else {
            DecodeMode::Joint
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub prompt_variant: PromptVariant,
    pub loss_mode: LossMode,
    pub paths: Paths,
    pub model: ModelConfig,
    pub training: Training,
    pub data: DataSection,
    pub inference: InferenceSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            prompt_variant: PromptVariant::Manual,
            loss_mode: LossMode::Bipartite,
            paths: Paths::default(),
            model: ModelConfig::default(),
            training: Training::default(),
            data: DataSection::default(),
            inference: InferenceSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text` after applying `key=value` overrides, where keys are
    /// dotted paths such as `training.steps` and values are TOML literals
    /// (bare words are taken as strings).
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: RunConfig = parse_with_overrides(text, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.model.validate()?;
        let t = &self.training;
        if t.learning_rates.is_empty() {
            return bad("training.learning_rates must not be empty".into());
        }
        if t.seeds.is_empty() {
            return bad("training.seeds must not be empty".into());
        }
        for &lr in &t.learning_rates {
            self.settings(t.seeds[0], lr).validate()?;
        }
        if !(self.data.ratio > 0.0 && self.data.ratio <= 1.0) {
            return bad(format!("data.ratio {} not in (0, 1]", self.data.ratio));
        }
        if self.data.max_len < 4 || self.data.max_len > self.model.max_positions {
            return bad(format!(
                "data.max_len {} must lie in [4, model.max_positions = {}]",
                self.data.max_len, self.model.max_positions
            ));
        }
        if self.inference.max_span_len == 0 {
            return bad("inference.max_span_len must be >= 1".into());
        }
        Ok(())
    }

    /// Every configured input file must exist.
    pub fn check_paths(&self) -> Result<()> {
        let p = &self.paths;
        for (key, path) in [
            ("train", &p.train),
            ("dev", &p.dev),
            ("test", &p.test),
            ("templates", &p.templates),
            ("ontology", &p.ontology),
            ("vocab", &p.vocab),
        ] {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(Error::Config(format!(
                        "paths.{key}: {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Trainer settings for one (seed, learning rate) run of the sweep.
    pub fn settings(&self, seed: u64, learning_rate: f64) -> TrainSettings {
        let t = &self.training;
        TrainSettings {
            batch_size: t.batch_size,
            steps: t.steps,
            learning_rate,
            warmup_fraction: t.warmup_fraction,
            grad_clip: t.grad_clip,
            weight_decay: t.weight_decay,
            eval_every: t.eval_every,
            seed,
            loss_mode: self.loss_mode,
            shuffle_gold: self.data.shuffle_gold,
            max_span_len: self.inference.max_span_len,
        }
    }
}

/// Deserializes TOML `text` after applying dotted `key=value` overrides.
pub fn parse_with_overrides<T: DeserializeOwned>(text: &str, overrides: &[String]) -> Result<T> {
    let mut root: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    toml::Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
}

fn apply_override(root: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let value = parse_literal(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("non-empty");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.training.learning_rates, vec![1e-4, 3e-4]);
        assert_eq!(
            (
                c.training.batch_size,
                c.training.steps,
                c.training.eval_every
            ),
            (8, 2000, 200)
        );
    }

    #[test]
    fn overrides_win_over_file() {
        let text = "prompt_variant = \"soft\"\n[training]\nsteps = 50\n";
        let c = RunConfig::from_toml_with(
            text,
            &[
                "training.steps=7".into(),
                "loss_mode=fixed_order".into(),
                "training.learning_rates=[1e-3]".into(),
                "data.shuffle_gold=true".into(),
                "paths.train=a/b.jsonl".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.prompt_variant, PromptVariant::Soft);
        assert_eq!(c.training.steps, 7);
        assert_eq!(c.loss_mode, LossMode::FixedOrder);
        assert_eq!(c.training.learning_rates, vec![1e-3]);
        assert!(c.data.shuffle_gold);
        assert_eq!(c.paths.train.as_deref(), Some(Path::new("a/b.jsonl")));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("[training]\nstepz = 3\n").is_err());
        assert!(RunConfig::from_toml("[data]\nratio = 0.0\n").is_err());
        assert!(RunConfig::from_toml("[training]\nseeds = []\n").is_err());
        assert!(RunConfig::from_toml("[inference]\nmax_span_len = 0\n").is_err());
        assert!(RunConfig::from_toml_with("", &["training.steps".into()]).is_err());
        assert!(RunConfig::from_toml("[model]\nhidden = 10\nheads = 4\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.training.steps = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
