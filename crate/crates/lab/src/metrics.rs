//! Accuracy, invariant-subgraph recovery, and per-cell co-occurrence.

use gala_core::graph::SyntheticGraph;
use gala_train::assistant::Partition;
use gala_train::model::{featurize, topk_range, EdgeScores, GraphBatch, ModelParams};
use gala_train::trainer::{accuracy, ForwardPath};
use serde::{Deserialize, Serialize};

use crate::{LabError, Result};

const CHUNK: usize = 512;

pub fn eval_accuracy(params: &ModelParams, graphs: &[SyntheticGraph], path: ForwardPath) -> Result<f64> {
    Ok(accuracy(params, graphs, path)?)
}

/// Fraction of matching entries; 0 for empty input.
pub fn accuracy_of(predictions: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    predictions.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64
}

/// F1 of one graph's top-k edges against its mask, with k the mask size.
/// `None` when the mask is empty.
pub fn graph_f1(scores: &[f64], mask: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), mask.len());
    let k = mask.iter().filter(|&&m| m).count();
    if k == 0 {
        return None;
    }
    let mut chosen = vec![false; scores.len()];
    topk_range(scores, 0, scores.len(), k, &mut chosen);
    let hits = chosen.iter().zip(mask).filter(|(c, m)| **c && **m).count();
    // precision and recall share the denominator k
    Some(hits as f64 / k as f64)
}

/// Mean [`graph_f1`] over `graphs`; `scores` follows their concatenated edge order.
pub fn identification_f1(scores: &EdgeScores, graphs: &[SyntheticGraph]) -> Result<f64> {
    let total: usize = graphs.iter().map(|g| g.num_edges()).sum();
    if scores.0.len() != total {
        return Err(LabError::Spec(format!("{} scores for {total} edges", scores.0.len())));
    }
    let mut lo = 0;
    let mut sum = 0.0;
    let mut n = 0;
    for g in graphs {
        let hi = lo + g.num_edges();
        if let Some(f) = graph_f1(&scores.0[lo..hi], &g.inv_edge_mask) {
            sum += f;
            n += 1;
        }
        lo = hi;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Featurizer scores for `graphs`, concatenated.
pub fn edge_scores(params: &ModelParams, graphs: &[SyntheticGraph]) -> Result<EdgeScores> {
    let mut out = Vec::new();
    for chunk in graphs.chunks(CHUNK) {
        let batch = GraphBatch::from_graphs(chunk)?;
        out.extend(featurize(&batch, params).0);
    }
    Ok(EdgeScores(out))
}

pub fn featurizer_f1(params: &ModelParams, graphs: &[SyntheticGraph]) -> Result<f64> {
    identification_f1(&edge_scores(params, graphs)?, graphs)
}

/// Empirical `P(c = y)` and `P(s = y)` over a set of graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cooccurrence {
    pub graphs: usize,
    pub invariant: f64,
    pub spurious: f64,
}

impl Cooccurrence {
    pub fn of<'a>(graphs: impl IntoIterator<Item = &'a SyntheticGraph>) -> Self {
        let (mut n, mut c, mut s) = (0usize, 0usize, 0usize);
        for g in graphs {
            n += 1;
            c += usize::from(g.bits.c_bit == g.label);
            s += usize::from(g.bits.s_bit == g.label);
        }
        let frac = |k: usize| if n == 0 { f64::NAN } else { k as f64 / n as f64 };
        Self { graphs: n, invariant: frac(c), spurious: frac(s) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceCurves {
    /// Assistant-correct cell.
    pub positive: Cooccurrence,
    /// Assistant-incorrect cell.
    pub negative: Cooccurrence,
}

impl CooccurrenceCurves {
    pub fn invariant_gap(&self) -> f64 {
        (self.positive.invariant - self.negative.invariant).abs()
    }

    pub fn spurious_gap(&self) -> f64 {
        (self.positive.spurious - self.negative.spurious).abs()
    }
}

pub fn cooccurrence_curves(partition: &Partition, graphs: &[SyntheticGraph]) -> CooccurrenceCurves {
    assert_eq!(partition.len(), graphs.len(), "partition must cover the graphs");
    CooccurrenceCurves {
        positive: Cooccurrence::of(partition.positive_idx.iter().map(|&i| &graphs[i])),
        negative: Cooccurrence::of(partition.negative_idx.iter().map(|&i| &graphs[i])),
    }
}
