//! JSON checkpoint: config, vocabulary hash, step counter and named
//! row-major tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ModelParams, ParamIndex};
use super::tensor::Mat;
use crate::error::{Error, Result};

pub const FORMAT: &str = "spanprompt-checkpoint/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub step: usize,
    /// Free-form pipeline settings needed to reproduce inference.
    #[serde(default)]
    pub pipeline: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_params(
        params: &ModelParams<f32>,
        vocab_hash: &str,
        step: usize,
        pipeline: serde_json::Value,
    ) -> Self {
        let tensors = params
            .index
            .specs
            .iter()
            .zip(&params.tensors)
            .map(|(s, t)| NamedTensor {
                name: s.name.clone(),
                rows: t.rows,
                cols: t.cols,
                data: t.data.clone(),
            })
            .collect();
        Checkpoint {
            format: FORMAT.to_string(),
            config: params.config.clone(),
            vocab_size: params.vocab_size,
            vocab_hash: vocab_hash.to_string(),
            step,
            pipeline,
            tensors,
        }
    }

    /// Rebuilds parameters, rejecting a vocabulary whose hash differs.
    pub fn to_params(&self, vocab_hash: &str) -> Result<ModelParams<f32>> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format `{}`",
                self.format
            )));
        }
        if self.vocab_hash != vocab_hash {
            return Err(Error::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found: vocab_hash.to_string(),
            });
        }
        self.config.validate()?;
        let index = ParamIndex::new(&self.config, self.vocab_size);
        if index.specs.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                index.specs.len(),
                self.tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(self.tensors.len());
        for (spec, t) in index.specs.iter().zip(&self.tensors) {
            if spec.name != t.name
                || spec.rows != t.rows
                || spec.cols != t.cols
                || t.data.len() != t.rows * t.cols
            {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` ({}x{}) does not match expected `{}` ({}x{})",
                    t.name, t.rows, t.cols, spec.name, spec.rows, spec.cols
                )));
            }
            tensors.push(Mat::from_vec(t.rows, t.cols, t.data.clone()));
        }
        Ok(ModelParams {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            index,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path.as_ref())?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.as_ref().display())))
    }
}
