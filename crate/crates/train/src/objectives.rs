//! Classification and contrastive losses, and the pair samplers behind them.

use std::rc::Rc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::tape::{Pairs, Tape, Var};
use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// Raw inner product.
    Dot,
    /// Inner product of L2-normalized embeddings.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastConfig {
    pub penalty_weight: f64,
    pub temperature: f64,
    pub similarity: Similarity,
    /// Use only assistant-incorrect graphs as anchors.
    pub one_side: bool,
    /// Require negatives to share the anchor's assistant prediction.
    pub match_negative_proxy: bool,
    /// Cap on negatives per anchor; `None` uses the whole batch.
    pub max_negatives: Option<usize>,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            penalty_weight: 1.0,
            temperature: 1.0,
            similarity: Similarity::Cosine,
            one_side: true,
            match_negative_proxy: true,
            max_negatives: None,
        }
    }
}

impl ContrastConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(TrainError::Config("temperature must be positive".into()));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(TrainError::Config("penalty weight must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Pairs for one batch plus bookkeeping about what could not be formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairAssignment {
    pub pairs: Pairs,
    /// Candidate anchors skipped for lack of any positive.
    pub dropped_anchors: usize,
    /// Some kept anchor has no negative.
    pub missing_negatives: bool,
}

impl PairAssignment {
    pub fn is_empty(&self) -> bool {
        self.pairs.anchors.is_empty()
    }
}

/// Assistant view of one batch item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellTag {
    pub correct: bool,
    pub proxy: usize,
}

/// Which constraints the cross-partition sampler applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GalaSampling {
    pub one_side: bool,
    pub cross_partition: bool,
    pub match_negative_proxy: bool,
}

impl GalaSampling {
    pub fn from_config(c: &ContrastConfig) -> Self {
        Self { one_side: c.one_side, cross_partition: true, match_negative_proxy: c.match_negative_proxy }
    }
}

fn assemble(
    n: usize,
    is_anchor: impl Fn(usize) -> bool,
    is_positive: impl Fn(usize, usize) -> bool,
    is_negative: impl Fn(usize, usize) -> bool,
) -> PairAssignment {
    let mut out = PairAssignment::default();
    for a in (0..n).filter(|&a| is_anchor(a)) {
        let pos: Vec<usize> = (0..n).filter(|&j| j != a && is_positive(a, j)).collect();
        if pos.is_empty() {
            out.dropped_anchors += 1;
            continue;
        }
        let neg: Vec<usize> = (0..n).filter(|&j| j != a && is_negative(a, j)).collect();
        out.missing_negatives |= neg.is_empty();
        out.pairs.anchors.push(a);
        out.pairs.positives.push(pos);
        out.pairs.negatives.push(neg);
    }
    out
}

/// Positives share the label and sit in the other partition cell; negatives
/// carry another label and, optionally, the anchor's assistant prediction.
pub fn sample_pairs_gala(labels: &[usize], tags: &[CellTag], rule: GalaSampling) -> PairAssignment {
    assert_eq!(labels.len(), tags.len(), "partition must cover the batch");
    assemble(
        labels.len(),
        |a| !rule.one_side || !tags[a].correct,
        |a, j| labels[j] == labels[a] && (!rule.cross_partition || tags[j].correct != tags[a].correct),
        |a, j| labels[j] != labels[a] && (!rule.match_negative_proxy || tags[j].proxy == tags[a].proxy),
    )
}

/// Every graph anchors; positives share its label, negatives do not.
pub fn sample_pairs_ciga(labels: &[usize]) -> PairAssignment {
    assemble(labels.len(), |_| true, |a, j| labels[j] == labels[a], |a, j| labels[j] != labels[a])
}

fn truncate_negatives(pairs: &Pairs, max: Option<usize>) -> Pairs {
    let mut p = pairs.clone();
    if let Some(m) = max {
        p.negatives.iter_mut().for_each(|n| n.truncate(m));
    }
    p
}

/// Contrastive loss of per-graph embeddings on the tape.
pub fn contrastive_on(tape: &mut Tape, h: Var, assignment: &PairAssignment, config: &ContrastConfig) -> Var {
    let h = match config.similarity {
        Similarity::Cosine => tape.row_normalize(h),
        Similarity::Dot => h,
    };
    let pairs = Rc::new(truncate_negatives(&assignment.pairs, config.max_negatives));
    tape.contrastive(h, pairs, config.temperature)
}

pub fn contrastive_loss(embeddings: &Array2<f64>, assignment: &PairAssignment, config: &ContrastConfig) -> Result<f64> {
    if assignment.is_empty() {
        return Err(TrainError::EmptyAssignment);
    }
    let n = embeddings.nrows();
    let p = &assignment.pairs;
    let in_range = p.anchors.iter().chain(p.positives.iter().flatten()).chain(p.negatives.iter().flatten()).all(|&i| i < n);
    if !in_range {
        return Err(TrainError::Shape("pair index beyond the embedding rows".into()));
    }
    let mut tape = Tape::new();
    let h = tape.leaf(embeddings.clone());
    let l = contrastive_on(&mut tape, h, assignment, config);
    Ok(tape.scalar(l))
}

pub fn classification_loss(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() != labels.len() {
        return Err(TrainError::Shape(format!("{} logit rows for {} labels", logits.nrows(), labels.len())));
    }
    if labels.iter().any(|&y| y >= logits.ncols()) {
        return Err(TrainError::Shape("label beyond logit columns".into()));
    }
    let mut tape = Tape::new();
    let l = tape.leaf(logits.clone());
    let loss = tape.cross_entropy(l, Rc::new(labels.to_vec()));
    Ok(tape.scalar(loss))
}

pub fn total_loss(cls: f64, contrast: f64, penalty_weight: f64) -> f64 {
    cls + penalty_weight * contrast
}
