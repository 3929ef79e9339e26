//! GIN encoders and the featurizer / classifier backbone.

use std::rc::Rc;

use gala_core::graph::SyntheticGraph;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tape::{Grads, Tape, Topology, Var};
use crate::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub readout: Readout,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { num_layers: 3, hidden_dim: 32, readout: Readout::Mean, dropout: 0.0 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 {
            return Err(TrainError::Config("encoder needs at least one layer and unit".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Hidden width of the pairwise edge scorer.
    pub scorer_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { encoder: EncoderConfig::default(), input_dim: 1, num_classes: 3, scorer_hidden: 32 }
    }
}

/// Concatenated graphs with node and edge offsets.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub features: Array2<f64>,
    pub topo: Rc<Topology>,
    pub node_offsets: Rc<Vec<usize>>,
    pub edge_offsets: Vec<usize>,
    pub labels: Rc<Vec<usize>>,
    /// Ground-truth invariant edges, one per edge.
    pub inv_mask: Vec<bool>,
    src: Rc<Vec<usize>>,
    dst: Rc<Vec<usize>>,
}

impl GraphBatch {
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a SyntheticGraph>) -> Result<Self> {
        let graphs: Vec<&SyntheticGraph> = graphs.into_iter().collect();
        let dim = graphs.first().map_or(1, |g| g.feature_dim());
        let total: usize = graphs.iter().map(|g| g.num_nodes).sum();
        let mut features = Array2::zeros((total, dim));
        let mut node_offsets = vec![0];
        let mut edge_offsets = vec![0];
        let mut edges = Vec::new();
        let mut labels = Vec::with_capacity(graphs.len());
        let mut inv_mask = Vec::new();
        let mut base = 0;
        for g in &graphs {
            if g.feature_dim() != dim || g.node_features.len() != g.num_nodes {
                return Err(TrainError::Shape("inconsistent node features in batch".into()));
            }
            for (i, row) in g.node_features.iter().enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    features[[base + i, j]] = x;
                }
            }
            for &(u, v) in &g.edges {
                if u >= g.num_nodes || v >= g.num_nodes {
                    return Err(TrainError::Shape(format!("edge ({u}, {v}) leaves its graph")));
                }
                edges.push((base + u, base + v));
            }
            inv_mask.extend_from_slice(&g.inv_edge_mask);
            base += g.num_nodes;
            node_offsets.push(base);
            edge_offsets.push(edges.len());
            labels.push(g.label);
        }
        let src = edges.iter().map(|e| e.0).collect();
        let dst = edges.iter().map(|e| e.1).collect();
        Ok(Self {
            features,
            topo: Rc::new(Topology::new(total, edges)),
            node_offsets: Rc::new(node_offsets),
            edge_offsets,
            labels: Rc::new(labels),
            inv_mask,
            src: Rc::new(src),
            dst: Rc::new(dst),
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.topo.edges.len()
    }

    pub fn edge_range(&self, g: usize) -> std::ops::Range<usize> {
        self.edge_offsets[g]..self.edge_offsets[g + 1]
    }

    pub fn ground_truth_scores(&self) -> EdgeScores {
        EdgeScores(self.inv_mask.iter().map(|&m| m as u8 as f64).collect())
    }
}

/// Per-edge scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScores(pub Vec<f64>);

impl EdgeScores {
    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    fn column(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.0.len(), 1), self.0.clone()).expect("column shape")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct GinLayer {
    eps: usize,
    lin1: Linear,
    lin2: Linear,
    gain: usize,
    bias: usize,
    /// Index into the running-statistics buffers.
    stats: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    featurizer: Vec<GinLayer>,
    norm_gain: usize,
    norm_bias: usize,
    scorer: [Linear; 2],
    classifier: Vec<GinLayer>,
    head: Linear,
}

/// All learnable tensors, stored flat in a fixed order derived from the
/// configuration, plus the normalization statistics used at evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Vec<Array2<f64>>,
    /// One `2 x hidden` array per normalization layer: mean, then variance.
    pub buffers: Vec<Array2<f64>>,
    layout: Layout,
}

struct Builder<'r> {
    tensors: Vec<Array2<f64>>,
    buffers: Vec<Array2<f64>>,
    rng: &'r mut ChaCha8Rng,
}

impl Builder<'_> {
    fn push(&mut self, t: Array2<f64>) -> usize {
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    /// Uniform in `+-1/sqrt(fan_in)` for weights and biases alike.
    fn linear(&mut self, fan_in: usize, fan_out: usize) -> Linear {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| self.rng.gen_range(-bound..bound));
        let b = Array2::from_shape_fn((1, fan_out), |_| self.rng.gen_range(-bound..bound));
        Linear { w: self.push(w), b: self.push(b) }
    }

    fn encoder(&mut self, input: usize, cfg: &EncoderConfig) -> Vec<GinLayer> {
        (0..cfg.num_layers)
            .map(|l| {
                let fan_in = if l == 0 { input } else { cfg.hidden_dim };
                let eps = self.push(Array2::zeros((1, 1)));
                let lin1 = self.linear(fan_in, cfg.hidden_dim);
                let lin2 = self.linear(cfg.hidden_dim, cfg.hidden_dim);
                let gain = self.push(Array2::ones((1, cfg.hidden_dim)));
                let bias = self.push(Array2::zeros((1, cfg.hidden_dim)));
                let mut st = Array2::zeros((2, cfg.hidden_dim));
                st.row_mut(1).fill(1.0);
                self.buffers.push(st);
                GinLayer { eps, lin1, lin2, gain, bias, stats: self.buffers.len() - 1 }
            })
            .collect()
    }
}

impl ModelParams {
    pub fn init(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.encoder.validate()?;
        let h = config.encoder.hidden_dim;
        let mut b = Builder { tensors: Vec::new(), buffers: Vec::new(), rng };
        let featurizer = b.encoder(config.input_dim, &config.encoder);
        let norm_gain = b.push(Array2::ones((1, h)));
        let norm_bias = b.push(Array2::zeros((1, h)));
        let scorer = [b.linear(2 * h, config.scorer_hidden), b.linear(config.scorer_hidden, 1)];
        let classifier = b.encoder(config.input_dim, &config.encoder);
        let head = b.linear(h, config.num_classes);
        let layout = Layout { featurizer, norm_gain, norm_bias, scorer, classifier, head };
        Ok(Self { config, tensors: b.tensors, buffers: b.buffers, layout })
    }

    /// Rebuilds params from stored tensors, checking every shape.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Array2<f64>>) -> Result<Self> {
        let mut rng = rand::SeedableRng::seed_from_u64(0);
        let mut p = Self::init(config, &mut rng)?;
        if p.tensors.len() != tensors.len() {
            return Err(TrainError::Shape(format!(
                "expected {} tensors, got {}",
                p.tensors.len(),
                tensors.len()
            )));
        }
        for (i, (have, want)) in tensors.iter().zip(&p.tensors).enumerate() {
            if have.dim() != want.dim() {
                return Err(TrainError::Shape(format!("tensor {i}: {:?} vs {:?}", have.dim(), want.dim())));
            }
        }
        p.tensors = tensors;
        Ok(p)
    }

    /// Replaces the running statistics, checking shapes.
    pub fn with_buffers(mut self, buffers: Vec<Array2<f64>>) -> Result<Self> {
        let ok = buffers.len() == self.buffers.len()
            && buffers.iter().zip(&self.buffers).all(|(a, b)| a.dim() == b.dim());
        if !ok {
            return Err(TrainError::Shape("normalization buffers do not match the layout".into()));
        }
        self.buffers = buffers;
        Ok(self)
    }

    /// Sets the normalization buffers to the pooled statistics of a series
    /// of training passes, weighting each by its row count.
    pub fn calibrate(&mut self, passes: impl IntoIterator<Item = Pass<'static>>) {
        let h = self.config.encoder.hidden_dim;
        let k = self.buffers.len();
        let mut n = vec![0.0; k];
        let mut s1 = vec![vec![0.0; h]; k];
        let mut s2 = vec![vec![0.0; h]; k];
        for pass in passes {
            for (i, rows, mean, var) in pass.stats {
                n[i] += rows;
                for j in 0..h {
                    s1[i][j] += rows * mean[j];
                    s2[i][j] += rows * (var[j] + mean[j] * mean[j]);
                }
            }
        }
        for i in (0..k).filter(|&i| n[i] > 0.0) {
            for j in 0..h {
                let m = s1[i][j] / n[i];
                self.buffers[i][[0, j]] = m;
                self.buffers[i][[1, j]] = (s2[i][j] / n[i] - m * m).max(0.0);
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Order-sensitive digest of all weights.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tensors {
            for x in t {
                h ^= x.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        for x in self.buffers.iter().flatten() {
            h ^= x.to_bits();
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    /// Registers every tensor as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound { vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect() }
    }
}

/// Tape handles for one [`ModelParams`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Gradient per tensor, zero where the loss does not reach.
    pub fn grads(&self, grads: &Grads, params: &ModelParams) -> Vec<Array2<f64>> {
        self.vars
            .iter()
            .zip(&params.tensors)
            .map(|(&v, t)| grads.get(v).cloned().unwrap_or_else(|| Array2::zeros(t.raw_dim())))
            .collect()
    }
}

/// Randomness used by dropout during a training step.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

/// State of one forward pass. Training passes normalize with batch
/// statistics and record them; evaluation passes use the stored buffers.
pub struct Pass<'r> {
    pub dropout: Option<Dropout<'r>>,
    training: bool,
    stats: Vec<(usize, f64, Vec<f64>, Vec<f64>)>,
}

impl<'r> Pass<'r> {
    pub fn eval() -> Self {
        Self { dropout: None, training: false, stats: Vec::new() }
    }

    pub fn train(dropout: Option<Dropout<'r>>) -> Self {
        Self { dropout, training: true, stats: Vec::new() }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }
}

fn normalize(tape: &mut Tape, b: &Bound, params: &ModelParams, layer: &GinLayer, z: Var, pass: &mut Pass<'_>) -> Var {
    let z = if pass.training {
        let rows = tape.value(z).nrows() as f64;
        let (z, mean, var) = tape.batch_norm(z);
        pass.stats.push((layer.stats, rows, mean, var));
        z
    } else {
        let buf = &params.buffers[layer.stats];
        let shift = tape.leaf(buf.row(0).mapv(|m| -m).insert_axis(ndarray::Axis(0)));
        let scale = tape.leaf(buf.row(1).mapv(|v| 1.0 / (v + crate::tape::NORM_EPS).sqrt()).insert_axis(ndarray::Axis(0)));
        let z = tape.add_bias(z, shift);
        tape.mul_row(z, scale)
    };
    let z = tape.mul_row(z, b.vars[layer.gain]);
    tape.add_bias(z, b.vars[layer.bias])
}

fn maybe_dropout(tape: &mut Tape, x: Var, dropout: &mut Option<Dropout<'_>>) -> Var {
    match dropout {
        Some(d) if d.rate > 0.0 => {
            let keep = 1.0 - d.rate;
            let shape = tape.value(x).raw_dim();
            let mask = Array2::from_shape_fn(shape, |_| if d.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
            tape.mul_mask(x, mask)
        }
        _ => x,
    }
}

fn linear(tape: &mut Tape, b: &Bound, l: Linear, x: Var) -> Var {
    let y = tape.matmul(x, b.vars[l.w]);
    tape.add_bias(y, b.vars[l.b])
}

fn run_encoder(
    tape: &mut Tape,
    bound: &Bound,
    params: &ModelParams,
    layers: &[GinLayer],
    batch: &GraphBatch,
    edge_weights: Option<Var>,
    pass: &mut Pass<'_>,
) -> Var {
    let mut h = tape.leaf(batch.features.clone());
    let last = layers.len() - 1;
    for (l, layer) in layers.iter().enumerate() {
        let a = tape.gin_aggregate(h, bound.vars[layer.eps], edge_weights, batch.topo.clone());
        let z = linear(tape, bound, layer.lin1, a);
        let z = tape.relu(z);
        let z = maybe_dropout(tape, z, &mut pass.dropout);
        let z = linear(tape, bound, layer.lin2, z);
        let mut z = normalize(tape, bound, params, layer, z, pass);
        if l < last {
            z = tape.relu(z);
        }
        if l > 0 {
            z = tape.add(z, h);
        }
        h = z;
    }
    h
}

/// Node and graph embeddings of the classifier encoder.
pub fn encode_on(
    tape: &mut Tape,
    bound: &Bound,
    params: &ModelParams,
    batch: &GraphBatch,
    edge_weights: Option<Var>,
    pass: &mut Pass<'_>,
) -> (Var, Var) {
    let nodes = run_encoder(tape, bound, params, &params.layout.classifier, batch, edge_weights, pass);
    let mean = params.config.encoder.readout == Readout::Mean;
    let graphs = tape.readout(nodes, None, batch.node_offsets.clone(), mean);
    (nodes, graphs)
}

/// Inference-only encoding; returns `(node, graph)` embedding matrices.
pub fn encode(
    batch: &GraphBatch,
    params: &ModelParams,
    edge_weights: Option<&EdgeScores>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if let Some(w) = edge_weights {
        if w.0.len() != batch.num_edges() {
            return Err(TrainError::Shape(format!("{} edge weights for {} edges", w.0.len(), batch.num_edges())));
        }
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let w = edge_weights.map(|w| tape.leaf(w.column()));
    let (n, g) = encode_on(&mut tape, &bound, params, batch, w, &mut Pass::eval());
    Ok((tape.value(n).clone(), tape.value(g).clone()))
}

/// Edge scores as an `E x 1` tape node.
pub fn featurize_on(
    tape: &mut Tape,
    bound: &Bound,
    params: &ModelParams,
    batch: &GraphBatch,
    pass: &mut Pass<'_>,
) -> Var {
    let lay = &params.layout;
    let z = run_encoder(tape, bound, params, &lay.featurizer, batch, None, pass);
    let z = tape.layer_norm(z);
    let z = tape.mul_row(z, bound.vars[lay.norm_gain]);
    let z = tape.add_bias(z, bound.vars[lay.norm_bias]);
    let zi = tape.gather(z, batch.src.clone());
    let zj = tape.gather(z, batch.dst.clone());
    let score = |a: Var, b: Var, tape: &mut Tape| {
        let x = tape.concat(a, b);
        let x = linear(tape, bound, lay.scorer[0], x);
        let x = tape.relu(x);
        let x = linear(tape, bound, lay.scorer[1], x);
        tape.sigmoid(x)
    };
    let fwd = score(zi, zj, tape);
    let bwd = score(zj, zi, tape);
    let sum = tape.add(fwd, bwd);
    tape.scale(sum, 0.5)
}

pub fn featurize(batch: &GraphBatch, params: &ModelParams) -> EdgeScores {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let s = featurize_on(&mut tape, &bound, params, batch, &mut Pass::eval());
    EdgeScores(tape.value(s).column(0).to_vec())
}

/// Logits and pre-head graph embeddings. With `scores` the messages are
/// reweighted and the readout weights each node by the chance that at least
/// one of its edges is kept; without, the plain encoder is used.
pub fn classify_on(
    tape: &mut Tape,
    bound: &Bound,
    params: &ModelParams,
    batch: &GraphBatch,
    scores: Option<Var>,
    pass: &mut Pass<'_>,
) -> (Var, Var) {
    let graphs = match scores {
        None => encode_on(tape, bound, params, batch, None, pass).1,
        Some(s) => {
            let nodes = run_encoder(tape, bound, params, &params.layout.classifier, batch, Some(s), pass);
            let nu = tape.noisy_or(s, batch.topo.clone());
            let mean = params.config.encoder.readout == Readout::Mean;
            tape.readout(nodes, Some(nu), batch.node_offsets.clone(), mean)
        }
    };
    let logits = linear(tape, bound, params.layout.head, graphs);
    (logits, graphs)
}

pub fn classify(
    batch: &GraphBatch,
    scores: Option<&EdgeScores>,
    params: &ModelParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if let Some(s) = scores {
        if s.0.len() != batch.num_edges() {
            return Err(TrainError::Shape(format!("{} scores for {} edges", s.0.len(), batch.num_edges())));
        }
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let s = scores.map(|s| tape.leaf(s.column()));
    let (l, g) = classify_on(&mut tape, &bound, params, batch, s, &mut Pass::eval());
    Ok((tape.value(l).clone(), tape.value(g).clone()))
}

/// Keeps the `ceil(ratio * |E|)` best-scoring edges of each graph; ties go
/// to the lower edge index.
pub fn topk_edge_mask(scores: &EdgeScores, edge_offsets: &[usize], ratio: f64) -> Result<Vec<bool>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(TrainError::Config(format!("ratio {ratio} outside (0, 1]")));
    }
    let mut mask = vec![false; scores.0.len()];
    for w in edge_offsets.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let keep = ((ratio * (hi - lo) as f64) - 1e-9).ceil().max(0.0) as usize;
        topk_range(&scores.0, lo, hi, keep, &mut mask);
    }
    Ok(mask)
}

/// Marks the `keep` best edges of `lo..hi` in `mask`.
pub fn topk_range(scores: &[f64], lo: usize, hi: usize, keep: usize, mask: &mut [bool]) {
    let mut idx: Vec<usize> = (lo..hi).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    for &e in idx.iter().take(keep) {
        mask[e] = true;
    }
}

/// Argmax per row; ties resolve to the lowest class.
pub fn argmax_rows(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &x) in r.iter().enumerate() {
                if x > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use gala_core::scm::BitRecord;
    use gala_core::synth::{assemble_graph, AssemblyConfig};
    use rand::SeedableRng;

    fn graphs(n: usize, seed: u64) -> Vec<SyntheticGraph> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| assemble_graph(BitRecord { y: i % 3, c_bit: i % 3, s_bit: (i + 1) % 3 }, &AssemblyConfig::default(), &mut rng))
            .collect()
    }

    fn params(seed: u64) -> ModelParams {
        ModelParams::init(ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn single_node() -> SyntheticGraph {
        SyntheticGraph {
            num_nodes: 1,
            edges: vec![],
            node_features: vec![vec![1.0]],
            label: 0,
            inv_edge_mask: vec![],
            bits: BitRecord { y: 0, c_bit: 0, s_bit: 0 },
            env_id: 0,
        }
    }

    #[test]
    fn single_node_embedding_is_self_transform() {
        let g = single_node();
        let p = params(1);
        let b = GraphBatch::from_graphs([&g]).unwrap();
        let (nodes, graph) = encode(&b, &p, None).unwrap();
        assert_eq!(nodes.row(0), graph.row(0));
        assert_eq!(graph.dim(), (1, 32));
    }

    #[test]
    fn calibrated_eval_matches_training_pass() {
        let gs = graphs(6, 8);
        let b = GraphBatch::from_graphs(&gs).unwrap();
        let mut p = params(9);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let mut pass = Pass::train(None);
        let s = featurize_on(&mut tape, &bound, &p, &b, &mut pass);
        let (train_logits, _) = classify_on(&mut tape, &bound, &p, &b, Some(s), &mut pass);
        let want = tape.value(train_logits).clone();
        p.calibrate([pass]);
        let scores = featurize(&b, &p);
        let (got, _) = classify(&b, Some(&scores), &p).unwrap();
        assert!((&got - &want).mapv(f64::abs).fold(0.0f64, |m, &x| m.max(x)) < 1e-9);
    }

    #[test]
    fn permutation_invariance() {
        let g = graphs(1, 3).pop().unwrap();
        let n = g.num_nodes;
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        assert_eq!({ let mut p = perm.clone(); p.sort(); p }, (0..n).collect::<Vec<_>>());
        let mut h = g.clone();
        h.edges = g.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let p = params(2);
        let (_, a) = encode(&GraphBatch::from_graphs([&g]).unwrap(), &p, None).unwrap();
        let (_, b) = encode(&GraphBatch::from_graphs([&h]).unwrap(), &p, None).unwrap();
        let diff = (&a - &b).mapv(f64::abs).fold(0.0f64, |m, &x| m.max(x));
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn zero_edge_weights_match_edgeless_graph() {
        let g = graphs(1, 4).pop().unwrap();
        let mut bare = g.clone();
        bare.edges.clear();
        bare.inv_edge_mask.clear();
        let p = params(5);
        let b = GraphBatch::from_graphs([&g]).unwrap();
        let zeros = EdgeScores(vec![0.0; g.num_edges()]);
        let (n1, g1) = encode(&b, &p, Some(&zeros)).unwrap();
        let (n2, g2) = encode(&GraphBatch::from_graphs([&bare]).unwrap(), &p, None).unwrap();
        assert_eq!(n1, n2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn unit_scores_match_plain_encoder() {
        let gs = graphs(4, 6);
        let b = GraphBatch::from_graphs(&gs).unwrap();
        let p = params(7);
        let (l1, e1) = classify(&b, Some(&EdgeScores::ones(b.num_edges())), &p).unwrap();
        let (l2, e2) = classify(&b, None, &p).unwrap();
        assert_eq!(l1.dim(), (4, 3));
        assert!((&l1 - &l2).mapv(f64::abs).sum() < 1e-9);
        assert!((&e1 - &e2).mapv(f64::abs).sum() < 1e-9);
    }

    #[test]
    fn removing_an_edge_equals_zero_score() {
        let gs = graphs(1, 8);
        let g = &gs[0];
        let p = params(9);
        let b = GraphBatch::from_graphs([g]).unwrap();
        let mut scores: Vec<f64> = (0..g.num_edges()).map(|e| 0.2 + 0.6 * ((e * 5) % 7) as f64 / 7.0).collect();
        scores[3] = 0.0;
        let (l1, _) = classify(&b, Some(&EdgeScores(scores.clone())), &p).unwrap();
        let mut cut = g.clone();
        cut.edges.remove(3);
        cut.inv_edge_mask.remove(3);
        scores.remove(3);
        let (l2, _) = classify(&GraphBatch::from_graphs([&cut]).unwrap(), Some(&EdgeScores(scores)), &p).unwrap();
        assert!((&l1 - &l2).mapv(f64::abs).sum() < 1e-12);
    }

    #[test]
    fn scores_are_symmetric_and_bounded() {
        let gs = graphs(3, 10);
        let p = params(11);
        let b = GraphBatch::from_graphs(&gs).unwrap();
        let s = featurize(&b, &p);
        assert_eq!(s.0.len(), b.num_edges());
        assert!(s.0.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(s.0.iter().all(|&x| (x - 0.5).abs() < 0.25), "{:?}", s.0);
        let mut flipped = gs.clone();
        for g in &mut flipped {
            g.edges = g.edges.iter().map(|&(u, v)| (v, u)).collect();
        }
        let t = featurize(&GraphBatch::from_graphs(&flipped).unwrap(), &p);
        for (a, b) in s.0.iter().zip(&t.0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn topk_examples() {
        let s = EdgeScores(vec![0.1, 0.9, 0.5, 0.7]);
        assert_eq!(topk_edge_mask(&s, &[0, 4], 1.0).unwrap(), vec![true; 4]);
        assert_eq!(topk_edge_mask(&s, &[0, 4], 0.5).unwrap(), vec![false, true, false, true]);
        let tie = EdgeScores(vec![0.5, 0.9, 0.5, 0.5]);
        assert_eq!(topk_edge_mask(&tie, &[0, 4], 0.5).unwrap(), vec![true, true, false, false]);
        assert!(topk_edge_mask(&s, &[0, 4], 0.0).is_err());
        let m = topk_edge_mask(&EdgeScores(vec![0.3; 7]), &[0, 3, 7], 0.4).unwrap();
        assert_eq!(m.iter().filter(|&&x| x).count(), 2 + 2);
    }

    #[test]
    fn from_tensors_checks_shapes() {
        let p = params(12);
        let back = ModelParams::from_tensors(p.config, p.tensors.clone()).unwrap();
        assert_eq!(back, p);
        let mut bad = p.tensors.clone();
        bad[0] = Array2::zeros((2, 2));
        assert!(ModelParams::from_tensors(p.config, bad).is_err());
        assert_ne!(params(12).checksum(), params(13).checksum());
    }
}
