//! Versioned JSON checkpoints.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::model::{ModelConfig, ModelParams};
use crate::{Result, TrainError};

pub const CHECKPOINT_FORMAT: &str = "twopiece-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of a ChaCha stream, enough to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(seed: u64, rng: &rand_chacha::ChaCha8Rng) -> Self {
        Self { seed, stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> rand_chacha::ChaCha8Rng {
        let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r.set_word_pos(self.word_pos);
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<Array2<f64>>,
    pub buffers: Vec<Array2<f64>>,
    pub rng: RngState,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, rng: RngState, meta: serde_json::Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: params.config,
            tensors: params.tensors.clone(),
            buffers: params.buffers.clone(),
            rng,
            meta,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::from_tensors(self.config, self.tensors.clone())?.with_buffers(self.buffers.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != CHECKPOINT_VERSION as u64 {
            return Err(TrainError::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let ck: Checkpoint = serde_json::from_value(raw)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(TrainError::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        ck.params()?;
        Ok(ck)
    }
}
