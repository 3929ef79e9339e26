//! Experiment specifications and the desk-scale training preset.

use std::path::Path;

use gala_train::trainer::{Method, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub a: f64,
    pub b: f64,
}

impl Dataset {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn label(&self) -> String {
        format!("{{{},{}}}", self.a, self.b)
    }
}

/// Training hyperparameters shared by every cell of a suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub lr: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub penalty_weight: f64,
    /// Fixed factor, used when `auto_upsample` is off and by sweeps.
    pub upsample_k: usize,
    /// Pick the GALA factor per partition with `auto_upsample_factor`.
    pub auto_upsample: bool,
    pub assistant_epochs: usize,
    pub assistant_batch_size: usize,
}

impl Default for TrainSettings {
    /// Desk scale: short schedules that fit a single CPU core.
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            pretrain_epochs: 5,
            max_epochs: 30,
            early_stop_patience: 5,
            penalty_weight: 4.0,
            upsample_k: 4,
            auto_upsample: true,
            assistant_epochs: 10,
            assistant_batch_size: 128,
        }
    }
}

/// `upsample_k` of cells whose factor is resolved from the partition.
pub const AUTO_K: usize = 0;

impl TrainSettings {
    /// Upsampling factor of the default GALA cell, possibly [`AUTO_K`].
    pub fn default_k(&self) -> usize {
        if self.auto_upsample {
            AUTO_K
        } else {
            self.upsample_k
        }
    }

    pub fn config(&self, method: Method, seed: u64, penalty_weight: f64, upsample_k: usize) -> TrainConfig {
        let mut c = TrainConfig {
            method,
            lr: self.lr,
            batch_size: self.batch_size,
            pretrain_epochs: self.pretrain_epochs,
            max_epochs: self.max_epochs,
            early_stop_patience: self.early_stop_patience,
            upsample_k,
            seed,
            ..Default::default()
        };
        c.contrast.penalty_weight = penalty_weight;
        c.assistant.epochs = self.assistant_epochs;
        c.assistant.lr = self.lr;
        c.assistant.batch_size = self.assistant_batch_size;
        c
    }
}

/// One-at-a-time sweeps around the default GALA cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sweeps {
    pub penalty: Vec<f64>,
    pub upsample: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub name: String,
    pub datasets: Vec<Dataset>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub per_class: usize,
    /// Seed of the generated graphs; training seeds vary separately.
    pub data_seed: u64,
    pub train: TrainSettings,
    pub sweeps: Sweeps,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "suite".into(),
            datasets: vec![Dataset::new(0.7, 0.9)],
            methods: vec![Method::Gala, Method::Erm, Method::CigaContrast, Method::OracleGroundtruth],
            seeds: vec![1, 2, 3],
            per_class: 1000,
            data_seed: 0,
            train: TrainSettings::default(),
            sweeps: Sweeps::default(),
        }
    }
}

/// `(penalty, upsample_k)` of one GALA cell.
pub type GalaPoint = (f64, usize);

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LabError::Spec(m.into()));
        if self.methods.is_empty() {
            return bad("methods must be nonempty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty");
        }
        if self.datasets.is_empty() {
            return bad("datasets must be nonempty");
        }
        if self.per_class == 0 {
            return bad("per_class must be positive");
        }
        if self.sweeps.penalty.iter().any(|&l| !(l >= 0.0)) {
            return bad("penalty weights must be nonnegative");
        }
        if self.sweeps.upsample.iter().chain([&self.train.upsample_k]).any(|k| !(1..=4).contains(k)) {
            return bad("upsampling factors must lie in 1..=4");
        }
        for d in &self.datasets {
            gala_core::synth::SplitParams::new(d.a, d.b)?;
        }
        let mut seen = std::collections::HashSet::new();
        if !self.methods.iter().all(|m| seen.insert(*m)) {
            return bad("methods listed twice");
        }
        self.train.config(Method::Gala, 1, self.train.penalty_weight, self.train.upsample_k).validate()?;
        Ok(())
    }

    /// The default GALA cell followed by the sweep cells, without repeats.
    pub fn gala_points(&self) -> Vec<GalaPoint> {
        let t = &self.train;
        let k = t.default_k();
        let mut pts = vec![(t.penalty_weight, k)];
        pts.extend(self.sweeps.penalty.iter().map(|&l| (l, k)));
        pts.extend(self.sweeps.upsample.iter().map(|&k| (t.penalty_weight, k)));
        let mut out: Vec<GalaPoint> = Vec::new();
        for p in pts {
            if !out.iter().any(|q| q.0 == p.0 && q.1 == p.1) {
                out.push(p);
            }
        }
        out
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }
}
