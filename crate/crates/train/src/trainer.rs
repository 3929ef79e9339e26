//! Training loops for every method, with seeded streams and early stopping.

use std::time::Instant;

use gala_core::graph::SyntheticGraph;
use gala_core::synth::DatasetSplit;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assistant::{
    cell_cooccurrence, partition_by_clustering, partition_by_prediction, train_assistant,
    upsample_minority, AssistantConfig, Partition,
};
use crate::model::{argmax_rows, classify_on, featurize_on, Dropout, GraphBatch, Pass, ModelConfig, ModelParams};
use crate::objectives::{
    contrastive_on, sample_pairs_ciga, sample_pairs_gala, CellTag, ContrastConfig, GalaSampling, PairAssignment,
};
use crate::optim::Adam;
use crate::tape::Tape;
use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gala,
    Erm,
    ErmInterpretable,
    CigaContrast,
    OracleGroundtruth,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Self::Gala, Self::Erm, Self::ErmInterpretable, Self::CigaContrast, Self::OracleGroundtruth];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gala => "gala",
            Self::Erm => "erm",
            Self::ErmInterpretable => "erm_interpretable",
            Self::CigaContrast => "ciga_contrast",
            Self::OracleGroundtruth => "oracle_groundtruth",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    fn path(self) -> ForwardPath {
        match self {
            Self::Erm => ForwardPath::Plain,
            Self::OracleGroundtruth => ForwardPath::GroundTruth,
            _ => ForwardPath::Featurized,
        }
    }
}

/// How graphs reach the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardPath {
    /// Plain encoder, no edge scores.
    Plain,
    /// Edge scores from the featurizer.
    Featurized,
    /// Edge scores from the ground-truth invariant mask.
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Prediction,
    Clustering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub lr: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    /// Total epochs, pretraining included.
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub upsample_k: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub contrast: ContrastConfig,
    pub assistant: AssistantConfig,
    pub partition_mode: PartitionMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Gala,
            lr: 1e-3,
            batch_size: 128,
            pretrain_epochs: 100,
            max_epochs: 200,
            early_stop_patience: 5,
            upsample_k: 1,
            seed: 1,
            model: ModelConfig::default(),
            contrast: ContrastConfig::default(),
            assistant: AssistantConfig::default(),
            partition_mode: PartitionMode::Prediction,
        }
    }
}

/// Penalty weights searched by the sweeps.
pub const PENALTY_GRID: [f64; 7] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(TrainError::Config("lr and batch_size must be positive".into()));
        }
        if !(1..=4).contains(&self.upsample_k) {
            return Err(TrainError::Config(format!("upsample_k {} outside 1..=4", self.upsample_k)));
        }
        self.model.encoder.validate()?;
        self.contrast.validate()
    }

    fn contrast_active(&self, epoch: usize) -> bool {
        matches!(self.method, Method::Gala | Method::CigaContrast)
            && epoch >= self.pretrain_epochs
            && self.contrast.penalty_weight > 0.0
    }
}

/// Purposes that get their own random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Order = 2,
    AssistantInit = 3,
    AssistantOrder = 4,
    Dropout = 5,
    Cluster = 6,
}

/// Every random draw of a run comes from `ChaCha8(seed)` on a fixed stream
/// per purpose, so runs are reproducible and purposes never interfere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    pub seed: u64,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream as u64);
        r
    }
}

/// There is no process-wide generator; this returns the stream factory
/// every component of a run draws from.
pub fn set_global_seed(seed: u64) -> SeedStreams {
    SeedStreams::new(seed)
}

const EVAL_CHUNK: usize = 512;

fn build_batch(graphs: &[SyntheticGraph], idx: &[usize]) -> Result<GraphBatch> {
    GraphBatch::from_graphs(idx.iter().map(|&i| &graphs[i]))
}

fn forward(
    tape: &mut Tape,
    params: &ModelParams,
    batch: &GraphBatch,
    path: ForwardPath,
    pass: &mut Pass<'_>,
) -> (crate::model::Bound, crate::tape::Var, crate::tape::Var) {
    let bound = params.bind(tape);
    let scores = match path {
        ForwardPath::Plain => None,
        ForwardPath::Featurized => Some(featurize_on(tape, &bound, params, batch, pass)),
        ForwardPath::GroundTruth => {
            let gt = batch.ground_truth_scores();
            Some(tape.leaf(Array2::from_shape_vec((gt.0.len(), 1), gt.0).expect("column")))
        }
    };
    let (logits, emb) = classify_on(tape, &bound, params, batch, scores, pass);
    (bound, logits, emb)
}

/// Graphs used to estimate normalization statistics after each epoch.
pub const CALIBRATION_GRAPHS: usize = 1024;

fn calibration_set(train: &[SyntheticGraph]) -> &[SyntheticGraph] {
    &train[..train.len().min(CALIBRATION_GRAPHS)]
}

/// Recomputes the normalization statistics over `graphs` with the current weights.
pub fn calibrate(params: &mut ModelParams, graphs: &[SyntheticGraph], path: ForwardPath) -> Result<()> {
    let mut passes = Vec::new();
    for chunk in graphs.chunks(EVAL_CHUNK) {
        let batch = GraphBatch::from_graphs(chunk)?;
        let mut tape = Tape::new();
        let mut pass = Pass::train(None);
        forward(&mut tape, params, &batch, path, &mut pass);
        passes.push(pass);
    }
    params.calibrate(passes);
    Ok(())
}

/// Logits and pre-head embeddings for `graphs`, in order.
pub fn predict(params: &ModelParams, graphs: &[SyntheticGraph], path: ForwardPath) -> Result<(Array2<f64>, Array2<f64>)> {
    let k = params.config.num_classes;
    let h = params.config.encoder.hidden_dim;
    let mut logits = Array2::zeros((0, k));
    let mut emb = Array2::zeros((0, h));
    for chunk in graphs.chunks(EVAL_CHUNK) {
        let batch = GraphBatch::from_graphs(chunk)?;
        let mut tape = Tape::new();
        let (_, l, e) = forward(&mut tape, params, &batch, path, &mut Pass::eval());
        logits.append(ndarray::Axis(0), tape.value(l).view()).expect("logit width");
        emb.append(ndarray::Axis(0), tape.value(e).view()).expect("embedding width");
    }
    Ok((logits, emb))
}

pub fn accuracy(params: &ModelParams, graphs: &[SyntheticGraph], path: ForwardPath) -> Result<f64> {
    if graphs.is_empty() {
        return Ok(0.0);
    }
    let (logits, _) = predict(params, graphs, path)?;
    let hits = argmax_rows(&logits).iter().zip(graphs).filter(|(p, g)| **p == g.label).count();
    Ok(hits as f64 / graphs.len() as f64)
}

struct StepStats {
    loss: f64,
    contrast: Option<f64>,
    hits: usize,
}

fn train_step(
    params: &mut ModelParams,
    opt: &mut Adam,
    batch: &GraphBatch,
    path: ForwardPath,
    contrast: Option<(&PairAssignment, &ContrastConfig)>,
    dropout: Option<Dropout<'_>>,
) -> Result<StepStats> {
    let mut tape = Tape::new();
    let mut pass = Pass::train(dropout);
    let (bound, logits, emb) = forward(&mut tape, params, batch, path, &mut pass);
    let cls = tape.cross_entropy(logits, batch.labels.clone());
    let mut loss = cls;
    let mut c_val = None;
    if let Some((assignment, cfg)) = contrast {
        let c = contrastive_on(&mut tape, emb, assignment, cfg);
        c_val = Some(tape.scalar(c));
        let weighted = tape.scale(c, cfg.penalty_weight);
        loss = tape.add(cls, weighted);
    }
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(TrainError::Diverged(format!("loss {value}")));
    }
    let hits = argmax_rows(tape.value(logits)).iter().zip(batch.labels.iter()).filter(|(p, y)| p == y).count();
    let grads = bound.grads(&tape.backward(loss), params);
    opt.step(&mut params.tensors, &grads);
    if !params.is_finite() {
        return Err(TrainError::Diverged("non-finite weights after update".into()));
    }
    Ok(StepStats { loss: value, contrast: c_val, hits })
}

/// Plain ERM schedule used by the assistant.
#[derive(Debug, Clone, Copy)]
pub struct ErmSchedule {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Select the epoch with best training accuracy rather than validation.
    pub select_on_train: bool,
}

pub(crate) fn fit_erm(
    mut params: ModelParams,
    split: &DatasetSplit,
    path: ForwardPath,
    schedule: &ErmSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<ModelParams> {
    let mut opt = Adam::new(schedule.lr, &params.tensors);
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut best = (f64::NEG_INFINITY, params.clone());
    for _ in 0..schedule.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(schedule.batch_size) {
            let batch = build_batch(&split.train, chunk)?;
            train_step(&mut params, &mut opt, &batch, path, None, None)?;
        }
        calibrate(&mut params, calibration_set(&split.train), path)?;
        let graphs = if schedule.select_on_train { &split.train } else { &split.val };
        let acc = accuracy(&params, graphs, path)?;
        if acc > best.0 {
            best = (acc, params.clone());
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub contrast_on: bool,
    pub train_loss: f64,
    pub train_acc: f64,
    pub contrast_loss: Option<f64>,
    pub val_acc: f64,
    pub test_acc: f64,
    pub empty_batches: usize,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub positives: usize,
    pub negatives: usize,
    pub negative_fraction: f64,
    pub pool_size: usize,
    /// `[(P(c = y), P(s = y)) in positive, ... in negative]`.
    pub cooccurrence: [(f64, f64); 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub method: Method,
    pub params: ModelParams,
    pub epochs: Vec<EpochRecord>,
    /// `None` when no epoch ran.
    pub selected_epoch: Option<usize>,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub partition: Option<PartitionStats>,
    pub init_checksum: u64,
    pub wall_clock_secs: f64,
}

impl RunResult {
    /// Everything except timing, for determinism checks.
    pub fn metrics_fingerprint(&self) -> String {
        serde_json::to_string(&(&self.epochs, self.selected_epoch, self.val_accuracy, self.test_accuracy, &self.partition))
            .expect("serializable")
    }
}

/// Trains the assistant and partitions the training graphs as configured.
pub fn build_partition(split: &DatasetSplit, config: &TrainConfig) -> Result<Partition> {
    let assistant = train_assistant(split, &config.assistant, config.seed)?;
    match config.partition_mode {
        PartitionMode::Prediction => partition_by_prediction(&assistant, split, config.assistant.backbone),
        PartitionMode::Clustering => {
            let k = config.assistant.cluster_k.unwrap_or(config.model.num_classes);
            let seed = rand::RngCore::next_u64(&mut SeedStreams::new(config.seed).rng(Stream::Cluster));
            partition_by_clustering(&assistant, split, config.assistant.backbone, k, seed)
        }
    }
}

pub fn run(split: &DatasetSplit, config: &TrainConfig) -> Result<RunResult> {
    run_with_partition(split, config, None)
}

/// Like [`run`], reusing a precomputed partition for gala when given.
pub fn run_with_partition(split: &DatasetSplit, config: &TrainConfig, partition: Option<&Partition>) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let seeds = SeedStreams::new(config.seed);
    let mut params = ModelParams::init(config.model, &mut seeds.rng(Stream::Init))?;
    let init_checksum = params.checksum();
    let path = config.method.path();

    let owned;
    let partition = match (config.method, partition) {
        (Method::Gala, Some(p)) => Some(p),
        (Method::Gala, None) => {
            owned = build_partition(split, config)?;
            Some(&owned)
        }
        _ => None,
    };
    if let Some(p) = partition {
        if p.len() != split.train.len() {
            return Err(TrainError::Config("partition does not cover the training set".into()));
        }
    }
    let mut pool: Vec<usize> = match partition {
        Some(p) => upsample_minority(p, config.upsample_k)?,
        None => (0..split.train.len()).collect(),
    };
    let tags: Vec<CellTag> = partition.map(partition_tags).unwrap_or_default();
    let partition_stats = partition.map(|p| PartitionStats {
        positives: p.positive_idx.len(),
        negatives: p.negative_idx.len(),
        negative_fraction: p.negative_fraction(),
        pool_size: pool.len(),
        cooccurrence: cell_cooccurrence(p, &split.train),
    });

    let mut opt = Adam::new(config.lr, &params.tensors);
    let mut order_rng = seeds.rng(Stream::Order);
    let mut drop_rng = seeds.rng(Stream::Dropout);
    let window_start = config.pretrain_epochs.min(config.max_epochs.saturating_sub(1));
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 0..config.max_epochs {
        pool.shuffle(&mut order_rng);
        let contrast_on = config.contrast_active(epoch);
        let (mut loss_sum, mut hits, mut seen) = (0.0, 0, 0);
        let (mut c_sum, mut c_batches, mut empty) = (0.0, 0usize, 0usize);
        let mut batches = 0;
        for chunk in pool.chunks(config.batch_size) {
            let batch = build_batch(&split.train, chunk)?;
            let assignment = if contrast_on {
                let labels = &batch.labels;
                Some(match config.method {
                    Method::Gala => {
                        let bt: Vec<CellTag> = chunk.iter().map(|&i| tags[i]).collect();
                        sample_pairs_gala(labels, &bt, GalaSampling::from_config(&config.contrast))
                    }
                    _ => sample_pairs_ciga(labels),
                })
            } else {
                None
            };
            let active = assignment.as_ref().filter(|a| !a.is_empty());
            if assignment.is_some() && active.is_none() {
                empty += 1;
            }
            let dropout = (config.model.encoder.dropout > 0.0)
                .then(|| Dropout { rate: config.model.encoder.dropout, rng: &mut drop_rng });
            let stats = train_step(&mut params, &mut opt, &batch, path, active.map(|a| (a, &config.contrast)), dropout)?;
            loss_sum += stats.loss * chunk.len() as f64;
            hits += stats.hits;
            seen += chunk.len();
            if let Some(c) = stats.contrast {
                c_sum += c;
                c_batches += 1;
            }
            batches += 1;
        }
        if contrast_on && config.method == Method::Gala && 2 * empty > batches {
            return Err(TrainError::PairStarvation { epoch, empty, batches });
        }
        calibrate(&mut params, calibration_set(&split.train), path)?;
        let val_acc = accuracy(&params, &split.val, path)?;
        let test_acc = accuracy(&params, &split.test, path)?;
        epochs.push(EpochRecord {
            epoch,
            contrast_on,
            train_loss: loss_sum / seen.max(1) as f64,
            train_acc: hits as f64 / seen.max(1) as f64,
            contrast_loss: (c_batches > 0).then(|| c_sum / c_batches as f64),
            val_acc,
            test_acc,
            empty_batches: empty,
            batches,
        });
        if epoch < window_start {
            continue;
        }
        if best.as_ref().map_or(true, |b| val_acc > b.1) {
            best = Some((epoch, val_acc, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                break;
            }
        }
    }

    let (selected_epoch, final_params) = match best {
        Some((e, _, p)) => (Some(e), p),
        None => (None, params),
    };
    let val_accuracy = accuracy(&final_params, &split.val, path)?;
    let test_accuracy = accuracy(&final_params, &split.test, path)?;
    Ok(RunResult {
        method: config.method,
        params: final_params,
        epochs,
        selected_epoch,
        val_accuracy,
        test_accuracy,
        partition: partition_stats,
        init_checksum,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Per-graph cell tags of a partition.
pub fn partition_tags(p: &Partition) -> Vec<CellTag> {
    p.correct_mask().into_iter().zip(&p.proxy).map(|(correct, &proxy)| CellTag { correct, proxy }).collect()
}
