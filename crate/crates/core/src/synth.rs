//! Turning bit records into motif graphs and building the three splits.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::SyntheticGraph;
use crate::motif::{invariant_motifs, spurious_motifs, Motif};
use crate::scm::BitRecord;
use crate::{Error, Result};

pub const NUM_CLASSES: usize = 3;

/// Returns `y` with probability `strength`, otherwise one of the other
/// classes uniformly.
pub fn sample_class_bit<R: Rng + ?Sized>(y: usize, strength: f64, num_classes: usize, rng: &mut R) -> usize {
    debug_assert!(y < num_classes);
    if rng.gen::<f64>() < strength {
        return y;
    }
    let r = rng.gen_range(0..num_classes - 1);
    if r >= y {
        r + 1
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    pub base_nodes: usize,
    /// Edges each new base node attaches with.
    pub attach: usize,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self { base_nodes: 12, attach: 1 }
    }
}

/// Preferential-attachment graph on `n` nodes.
fn barabasi_albert<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let m = m.max(1);
    let seed = (m + 1).min(n);
    let mut edges = Vec::new();
    // endpoint list: sampling uniformly from it is sampling by degree
    let mut ends = Vec::new();
    for v in 1..seed {
        edges.push((v - 1, v));
        ends.extend([v - 1, v]);
    }
    for v in seed..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m.min(v) {
            let t = ends[rng.gen_range(0..ends.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            edges.push((t, v));
            ends.extend([t, v]);
        }
    }
    edges
}

fn attach_motif<R: Rng + ?Sized>(
    motif: &Motif,
    base_nodes: usize,
    edges: &mut Vec<(usize, usize)>,
    mask: &mut Vec<bool>,
    invariant: bool,
    offset: usize,
    rng: &mut R,
) {
    for &(u, v) in &motif.edges {
        edges.push((u + offset, v + offset));
        mask.push(invariant);
    }
    let inner = offset + rng.gen_range(0..motif.num_nodes);
    edges.push((rng.gen_range(0..base_nodes), inner));
    mask.push(false);
}

/// Builds a base graph and bridges in the motifs selected by `bits`.
pub fn assemble_graph<R: Rng + ?Sized>(bits: BitRecord, config: &AssemblyConfig, rng: &mut R) -> SyntheticGraph {
    let inv = &invariant_motifs()[bits.c_bit];
    let spu = &spurious_motifs()[bits.s_bit];
    let base = config.base_nodes.max(1);
    let mut edges = barabasi_albert(base, config.attach, rng);
    let mut mask = vec![false; edges.len()];
    attach_motif(inv, base, &mut edges, &mut mask, true, base, rng);
    attach_motif(spu, base, &mut edges, &mut mask, false, base + inv.num_nodes, rng);
    let num_nodes = base + inv.num_nodes + spu.num_nodes;
    SyntheticGraph {
        num_nodes,
        edges,
        node_features: vec![vec![1.0]; num_nodes],
        label: bits.y,
        inv_edge_mask: mask,
        bits,
        env_id: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub a: f64,
    pub b_train: f64,
    pub b_val: f64,
    pub b_test: f64,
}

impl SplitParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let floor = 1.0 / NUM_CLASSES as f64;
        if !(a > floor && a <= 1.0) {
            return Err(Error::InvalidParam(format!("invariant strength {a} must lie in (1/3, 1]")));
        }
        if !(b >= floor && b <= 1.0) {
            return Err(Error::InvalidParam(format!("spurious strength {b} must lie in [1/3, 1]")));
        }
        Ok(Self { a, b_train: b, b_val: (b - 0.2).max(floor), b_test: floor })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<SyntheticGraph>,
    pub val: Vec<SyntheticGraph>,
    pub test: Vec<SyntheticGraph>,
    pub params: SplitParams,
    pub seed: u64,
    pub per_class: usize,
}

impl DatasetSplit {
    pub fn parts(&self) -> [(&'static str, &[SyntheticGraph]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

/// Validation and test graphs per class for a given training count.
pub fn eval_per_class(per_class: usize) -> usize {
    ((per_class as f64 / 3.0).round() as usize).max(1)
}

fn generate_part(
    a: f64,
    b: f64,
    per_class: usize,
    seed: u64,
    part: u64,
    config: &AssemblyConfig,
) -> Vec<SyntheticGraph> {
    (0..per_class * NUM_CLASSES)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((part << 32) | i as u64);
            let y = i % NUM_CLASSES;
            let bits = BitRecord {
                y,
                c_bit: sample_class_bit(y, a, NUM_CLASSES, &mut rng),
                s_bit: sample_class_bit(y, b, NUM_CLASSES, &mut rng),
            };
            let mut g = assemble_graph(bits, config, &mut rng);
            g.env_id = part as usize;
            g
        })
        .collect()
}

pub fn build_splits(a: f64, b: f64, per_class: usize, seed: u64) -> Result<DatasetSplit> {
    build_splits_with(a, b, per_class, seed, &AssemblyConfig::default())
}

pub fn build_splits_with(
    a: f64,
    b: f64,
    per_class: usize,
    seed: u64,
    config: &AssemblyConfig,
) -> Result<DatasetSplit> {
    if per_class == 0 {
        return Err(Error::InvalidParam("per_class must be at least 1".into()));
    }
    let params = SplitParams::new(a, b)?;
    let eval = eval_per_class(per_class);
    Ok(DatasetSplit {
        train: generate_part(a, params.b_train, per_class, seed, 0, config),
        val: generate_part(a, params.b_val, eval, seed, 1, config),
        test: generate_part(a, params.b_test, eval, seed, 2, config),
        params,
        seed,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motif::is_isomorphic;

    #[test]
    fn bit_sampler_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_class_bit(1, 1.0, 3, &mut rng) == 1));
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[sample_class_bit(0, 1.0 / 3.0, 3, &mut rng)] += 1;
        }
        assert!(counts.iter().all(|&c| (c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.01), "{counts:?}");
    }

    #[test]
    fn bit_sampler_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_class_bit(2, 0.8, 3, &mut rng) == 2).count();
        assert!((hits as f64 / n as f64 - 0.8).abs() < 0.005);
    }

    #[test]
    fn assembly_contains_both_motifs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = assemble_graph(BitRecord { y: 0, c_bit: 0, s_bit: 0 }, &AssemblyConfig::default(), &mut rng);
        g.validate().unwrap();
        let (n, e) = g.masked_subgraph();
        let h = crate::motif::house();
        assert!(is_isomorphic(n, &e, h.num_nodes, &h.edges));
        // grid nodes occupy the tail of the id range
        let grid: Vec<_> = g.edges.iter().filter(|&&(u, v)| u >= 17 && v >= 17).collect();
        assert_eq!(grid.len(), 12);
    }

    #[test]
    fn assembly_is_deterministic() {
        let bits = BitRecord { y: 2, c_bit: 1, s_bit: 2 };
        let g1 = assemble_graph(bits, &AssemblyConfig::default(), &mut ChaCha8Rng::seed_from_u64(9));
        let g2 = assemble_graph(bits, &AssemblyConfig::default(), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(g1, g2);
    }

    #[test]
    fn thousand_assemblies_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut total = 0;
        let mut expected = 0;
        for i in 0..1000 {
            let bits = BitRecord { y: i % 3, c_bit: (i / 3) % 3, s_bit: (i / 9) % 3 };
            let g = assemble_graph(bits, &AssemblyConfig::default(), &mut rng);
            g.validate().unwrap();
            total += g.num_nodes;
            expected += 12 + invariant_motifs()[bits.c_bit].num_nodes + spurious_motifs()[bits.s_bit].num_nodes;
            // BA tree plus motif edges plus two bridges
            let m = invariant_motifs()[bits.c_bit].edges.len() + spurious_motifs()[bits.s_bit].edges.len();
            assert_eq!(g.num_edges(), 11 + m + 2);
        }
        assert_eq!(total, expected);
    }

    #[test]
    fn split_strengths() {
        let s = SplitParams::new(0.8, 0.9).unwrap();
        assert!((s.b_val - 0.7).abs() < 1e-12 && (s.b_test - 1.0 / 3.0).abs() < 1e-15);
        let s = SplitParams::new(0.8, 0.4).unwrap();
        assert!((s.b_val - 1.0 / 3.0).abs() < 1e-15);
        assert!(build_splits(1.0 / 3.0, 0.8, 10, 0).is_err());
        assert!(build_splits(0.3, 0.8, 10, 0).is_err());
        assert!(build_splits(0.8, 0.8, 0, 0).is_err());
    }

    #[test]
    fn split_counts_per_class() {
        let d = build_splits(0.8, 0.6, 30, 5).unwrap();
        assert_eq!(d.train.len(), 90);
        assert_eq!(d.val.len(), 30);
        assert_eq!(d.test.len(), 30);
        for (_, part) in d.parts() {
            let mut per = [0usize; 3];
            part.iter().for_each(|g| per[g.label] += 1);
            assert!(per.iter().all(|&c| c == part.len() / 3));
        }
    }
}
