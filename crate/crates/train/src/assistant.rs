//! The environment assistant: an ERM model whose mistakes split the
//! training set into two cells.

use std::io::Write;
use std::path::Path;

use gala_core::graph::SyntheticGraph;
use gala_core::synth::DatasetSplit;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{argmax_rows, ModelConfig, ModelParams};
use crate::trainer::{predict, ForwardPath, Stream, SeedStreams, fit_erm, ErmSchedule};
use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    VanillaEncoder,
    InterpretableBackbone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    BestTrain,
    BestVal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssistantConfig {
    pub backbone: Backbone,
    pub selection: Selection,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Cluster the assistant embeddings instead of using its predictions.
    pub cluster_k: Option<usize>,
    pub model: ModelConfig,
}

impl Default for AssistantConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::VanillaEncoder,
            selection: Selection::BestTrain,
            epochs: 30,
            lr: 1e-3,
            batch_size: 128,
            cluster_k: None,
            model: ModelConfig::default(),
        }
    }
}

impl AssistantConfig {
    fn path(&self) -> ForwardPath {
        match self.backbone {
            Backbone::VanillaEncoder => ForwardPath::Plain,
            Backbone::InterpretableBackbone => ForwardPath::Featurized,
        }
    }
}

/// Assistant-correct (`positive_idx`) and assistant-incorrect
/// (`negative_idx`) training graphs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub positive_idx: Vec<usize>,
    pub negative_idx: Vec<usize>,
    /// Assistant prediction (label or cluster id) per graph.
    pub proxy: Vec<usize>,
}

impl Partition {
    pub fn from_correctness(correct: &[bool], proxy: Vec<usize>) -> Self {
        let positive_idx = (0..correct.len()).filter(|&i| correct[i]).collect();
        let negative_idx = (0..correct.len()).filter(|&i| !correct[i]).collect();
        Self { positive_idx, negative_idx, proxy }
    }

    pub fn len(&self) -> usize {
        self.proxy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proxy.is_empty()
    }

    pub fn correct_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.len()];
        self.positive_idx.iter().for_each(|&i| m[i] = true);
        m
    }

    pub fn negative_fraction(&self) -> f64 {
        self.negative_idx.len() as f64 / self.len().max(1) as f64
    }

    /// Writes `index,proxy,cell` rows.
    pub fn export_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "index,proxy,cell")?;
        let correct = self.correct_mask();
        for (i, (&p, &c)) in self.proxy.iter().zip(&correct).enumerate() {
            writeln!(out, "{i},{p},{}", if c { "positive" } else { "negative" })?;
        }
        Ok(())
    }
}

/// ERM-trains an assistant, keeping the epoch picked by `config.selection`.
pub fn train_assistant(split: &DatasetSplit, config: &AssistantConfig, seed: u64) -> Result<ModelParams> {
    let seeds = SeedStreams::new(seed);
    let mut init = seeds.rng(Stream::AssistantInit);
    let params = ModelParams::init(config.model, &mut init)?;
    if config.epochs == 0 {
        return Ok(params);
    }
    let schedule = ErmSchedule {
        epochs: config.epochs,
        lr: config.lr,
        batch_size: config.batch_size,
        select_on_train: config.selection == Selection::BestTrain,
    };
    fit_erm(params, split, config.path(), &schedule, &mut seeds.rng(Stream::AssistantOrder))
}

pub fn partition_from_predictions(preds: &[usize], labels: &[usize]) -> Partition {
    let correct: Vec<bool> = preds.iter().zip(labels).map(|(p, y)| p == y).collect();
    Partition::from_correctness(&correct, preds.to_vec())
}

pub fn partition_by_prediction(assistant: &ModelParams, split: &DatasetSplit, backbone: Backbone) -> Result<Partition> {
    let path = AssistantConfig { backbone, ..Default::default() }.path();
    let (logits, _) = predict(assistant, &split.train, path)?;
    let labels: Vec<usize> = split.train.iter().map(|g| g.label).collect();
    Ok(partition_from_predictions(&argmax_rows(&logits), &labels))
}

pub fn partition_by_clustering(
    assistant: &ModelParams,
    split: &DatasetSplit,
    backbone: Backbone,
    k: usize,
    seed: u64,
) -> Result<Partition> {
    let path = AssistantConfig { backbone, ..Default::default() }.path();
    let (_, emb) = predict(assistant, &split.train, path)?;
    let labels: Vec<usize> = split.train.iter().map(|g| g.label).collect();
    partition_from_embeddings(&emb, &labels, k, seed)
}

pub const KMEANS_MAX_ITER: usize = 300;

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Lloyd's iterations from a k-means++ start. Returns cluster ids.
pub fn kmeans(x: &Array2<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = x.nrows();
    if k < 2 {
        return Err(TrainError::Config("clustering needs k >= 2".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<usize> = vec![rng.gen_range(0..n)];
    while centers.len() < k.min(n) {
        let d: Vec<f64> = (0..n)
            .map(|i| centers.iter().map(|&c| sq_dist(x.row(i), x.row(c))).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut t = rng.gen::<f64>() * total;
        let mut pick = n - 1;
        for (i, &di) in d.iter().enumerate() {
            if t < di {
                pick = i;
                break;
            }
            t -= di;
        }
        centers.push(pick);
    }
    let mut cent: Vec<Vec<f64>> = centers.iter().map(|&c| x.row(c).to_vec()).collect();
    let mut assign = vec![0usize; n];
    let mut reseeded = false;
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for i in 0..n {
            let best = (0..cent.len())
                .min_by(|&a, &b| {
                    let da = sq_dist(x.row(i), ndarray::ArrayView1::from(&cent[a]));
                    let db = sq_dist(x.row(i), ndarray::ArrayView1::from(&cent[b]));
                    da.total_cmp(&db)
                })
                .unwrap_or(0);
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; x.ncols()]; cent.len()];
        let mut counts = vec![0usize; cent.len()];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, &v) in sums[assign[i]].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            if !reseeded {
                // move the empty center onto the point farthest from its own center
                reseeded = true;
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(x.row(a), ndarray::ArrayView1::from(&cent[assign[a]]));
                        let db = sq_dist(x.row(b), ndarray::ArrayView1::from(&cent[assign[b]]));
                        da.total_cmp(&db)
                    })
                    .unwrap_or(0);
                cent[empty] = x.row(far).to_vec();
                continue;
            }
        }
        for (c, (s, &m)) in cent.iter_mut().zip(sums.iter().zip(&counts)) {
            if m > 0 {
                *c = s.iter().map(|v| v / m as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    Ok(assign)
}

/// Clusters embeddings and marks a graph positive iff its cluster's
/// majority label equals its label.
pub fn partition_from_embeddings(emb: &Array2<f64>, labels: &[usize], k: usize, seed: u64) -> Result<Partition> {
    let assign = kmeans(emb, k, seed)?;
    let num_labels = labels.iter().copied().max().map_or(0, |m| m + 1);
    let clusters = assign.iter().copied().max().map_or(0, |m| m + 1);
    let mut votes = vec![vec![0usize; num_labels]; clusters];
    for (&c, &y) in assign.iter().zip(labels) {
        votes[c][y] += 1;
    }
    let majority: Vec<usize> = votes
        .iter()
        .map(|v| (0..v.len()).rev().max_by_key(|&y| v[y]).unwrap_or(0))
        .collect();
    let correct: Vec<bool> = assign.iter().zip(labels).map(|(&c, &y)| majority[c] == y).collect();
    Ok(Partition::from_correctness(&correct, assign))
}

/// Training pool with the smaller cell repeated `k` times. Ties count the
/// negative cell as the minority.
pub fn upsample_minority(partition: &Partition, k: usize) -> Result<Vec<usize>> {
    if !(1..=4).contains(&k) {
        return Err(TrainError::Config(format!("upsampling factor {k} outside 1..=4")));
    }
    let (pos, neg) = (&partition.positive_idx, &partition.negative_idx);
    let (major, minor) = if neg.len() <= pos.len() { (pos, neg) } else { (neg, pos) };
    let mut pool: Vec<usize> = major.clone();
    for _ in 0..k {
        pool.extend_from_slice(minor);
    }
    pool.sort_unstable();
    Ok(pool)
}

/// Cap on `k * minority fraction` for [`auto_upsample_factor`].
pub const AUTO_UPSAMPLE_BUDGET: f64 = 0.5;

/// Largest factor in `1..=4` whose repeated minority cell stays within
/// [`AUTO_UPSAMPLE_BUDGET`] of the training set size. Scarce minorities get
/// the full factor, near-balanced partitions none.
pub fn auto_upsample_factor(partition: &Partition) -> usize {
    let n = partition.len().max(1) as f64;
    let minor = partition.positive_idx.len().min(partition.negative_idx.len()) as f64 / n;
    (1..=4usize).rev().find(|&k| k as f64 * minor <= AUTO_UPSAMPLE_BUDGET).unwrap_or(1)
}

/// Co-occurrence of each piece with the label inside each cell, using the
/// true bits: `[(P(c = y), P(s = y)) in positive, ... in negative]`.
pub fn cell_cooccurrence(partition: &Partition, graphs: &[SyntheticGraph]) -> [(f64, f64); 2] {
    let rate = |idx: &[usize]| {
        let n = idx.len().max(1) as f64;
        let c = idx.iter().filter(|&&i| graphs[i].bits.c_bit == graphs[i].label).count() as f64;
        let s = idx.iter().filter(|&&i| graphs[i].bits.s_bit == graphs[i].label).count() as f64;
        (c / n, s / n)
    };
    [rate(&partition.positive_idx), rate(&partition.negative_idx)]
}
