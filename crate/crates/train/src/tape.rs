//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Scalars are 1x1
//! matrices. [`Tape::backward`] walks the record in reverse and returns one
//! gradient per node.

use std::rc::Rc;

use ndarray::{s, Array2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Undirected edge structure shared by the graph ops of one batch.
#[derive(Debug, Clone)]
pub struct Topology {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// Incident edge ids per node.
    pub incident: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut incident = vec![Vec::new(); num_nodes];
        for (e, &(u, v)) in edges.iter().enumerate() {
            incident[u].push(e);
            incident[v].push(e);
        }
        Self { num_nodes, edges, incident }
    }
}

/// Anchor / positive / negative index lists over the rows of an embedding.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pairs {
    pub anchors: Vec<usize>,
    pub positives: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
}

impl Pairs {
    pub fn num_terms(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Scale(usize, f64),
    MulMask(usize, Rc<Array2<f64>>),
    MulRow(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Concat(usize, usize),
    Gather(usize, Rc<Vec<usize>>),
    GinAggregate { h: usize, eps: usize, weights: Option<usize>, topo: Rc<Topology> },
    LayerNorm { x: usize, normed: Array2<f64>, inv_std: Vec<f64> },
    BatchNorm { x: usize, normed: Array2<f64>, inv_std: Vec<f64> },
    NoisyOr { s: usize, topo: Rc<Topology> },
    Readout { x: usize, weights: Option<usize>, offsets: Rc<Vec<usize>>, mean: bool, denom: Vec<f64> },
    CrossEntropy { logits: usize, labels: Rc<Vec<usize>>, probs: Array2<f64> },
    RowNormalize { x: usize, norms: Vec<f64> },
    Contrastive { h: usize, pairs: Rc<Pairs>, inv_temp: f64 },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub const NORM_EPS: f64 = 1e-5;
pub const READOUT_FLOOR: f64 = 1e-6;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a.0, b.0))
    }

    /// `x + b` with `b` a single row broadcast over the rows of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let v = self.value(x) + self.value(b);
        self.push(v, Op::AddBias(x.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x) * c;
        self.push(v, Op::Scale(x.0, c))
    }

    /// Elementwise product with a constant matrix of the same shape.
    pub fn mul_mask(&mut self, x: Var, mask: Array2<f64>) -> Var {
        let v = self.value(x) * &mask;
        self.push(v, Op::MulMask(x.0, Rc::new(mask)))
    }

    /// `x * r` with `r` a single row broadcast over the rows of `x`.
    pub fn mul_row(&mut self, x: Var, r: Var) -> Var {
        let v = self.value(x) * self.value(r);
        self.push(v, Op::MulRow(x.0, r.0))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|z| z.max(0.0));
        self.push(v, Op::Relu(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(sigmoid);
        self.push(v, Op::Sigmoid(x.0))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts differ");
        self.push(v, Op::Concat(a.0, b.0))
    }

    pub fn gather(&mut self, x: Var, rows: Rc<Vec<usize>>) -> Var {
        let v = self.value(x).select(Axis(0), &rows);
        self.push(v, Op::Gather(x.0, rows))
    }

    /// `(1 + eps) h_i + sum_j w_ij h_j` over the neighbors of each node.
    pub fn gin_aggregate(&mut self, h: Var, eps: Var, weights: Option<Var>, topo: Rc<Topology>) -> Var {
        let hv = self.value(h);
        let self_w = 1.0 + self.scalar(eps);
        let mut out = hv * self_w;
        let w = weights.map(|w| self.value(w));
        for (e, &(u, v)) in topo.edges.iter().enumerate() {
            let we = w.map_or(1.0, |w| w[[e, 0]]);
            if we == 0.0 {
                continue;
            }
            let (hu, hv_row) = (hv.row(u).to_owned(), hv.row(v).to_owned());
            out.row_mut(u).scaled_add(we, &hv_row);
            out.row_mut(v).scaled_add(we, &hu);
        }
        self.push(out, Op::GinAggregate { h: h.0, eps: eps.0, weights: weights.map(|w| w.0), topo })
    }

    /// Per-row standardization, no affine part.
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let d = xv.ncols() as f64;
        let mut normed = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in normed.rows_mut() {
            let mu = row.sum() / d;
            let var = row.iter().map(|z| (z - mu).powi(2)).sum::<f64>() / d;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            row.mapv_inplace(|z| (z - mu) * is);
            inv_std.push(is);
        }
        let out = normed.clone();
        self.push(out, Op::LayerNorm { x: x.0, normed, inv_std })
    }

    /// Standardizes each column with its own batch statistics. Returns the
    /// output along with the column means and biased variances.
    pub fn batch_norm(&mut self, x: Var) -> (Var, Vec<f64>, Vec<f64>) {
        let xv = self.value(x);
        let n = xv.nrows().max(1) as f64;
        let mut normed = xv.clone();
        let mut means = Vec::with_capacity(xv.ncols());
        let mut vars = Vec::with_capacity(xv.ncols());
        let mut inv_std = Vec::with_capacity(xv.ncols());
        for mut col in normed.columns_mut() {
            let mu = col.sum() / n;
            let var = col.iter().map(|z| (z - mu).powi(2)).sum::<f64>() / n;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            col.mapv_inplace(|z| (z - mu) * is);
            means.push(mu);
            vars.push(var);
            inv_std.push(is);
        }
        let out = normed.clone();
        (self.push(out, Op::BatchNorm { x: x.0, normed, inv_std }), means, vars)
    }

    /// Node weights `1 - prod(1 - s_e)` over incident edges; isolated nodes get 0.
    pub fn noisy_or(&mut self, s: Var, topo: Rc<Topology>) -> Var {
        let sv = self.value(s);
        let mut out = Array2::zeros((topo.num_nodes, 1));
        for (i, inc) in topo.incident.iter().enumerate() {
            if inc.is_empty() {
                continue;
            }
            let keep: f64 = inc.iter().map(|&e| 1.0 - sv[[e, 0]]).product();
            out[[i, 0]] = 1.0 - keep;
        }
        self.push(out, Op::NoisyOr { s: s.0, topo })
    }

    /// Per-segment weighted mean (or sum) of rows. `offsets` has one more
    /// entry than there are segments.
    pub fn readout(&mut self, x: Var, weights: Option<Var>, offsets: Rc<Vec<usize>>, mean: bool) -> Var {
        let xv = self.value(x);
        let g = offsets.len() - 1;
        let mut out = Array2::zeros((g, xv.ncols()));
        let mut denom = vec![1.0; g];
        let w = weights.map(|w| self.value(w));
        for k in 0..g {
            let (lo, hi) = (offsets[k], offsets[k + 1]);
            let mut row = out.row_mut(k);
            let mut total = 0.0;
            for i in lo..hi {
                let wi = w.map_or(1.0, |w| w[[i, 0]]);
                total += wi;
                row.scaled_add(wi, &xv.row(i));
            }
            if mean {
                denom[k] = total.max(READOUT_FLOOR);
                row.mapv_inplace(|z| z / denom[k]);
            }
        }
        self.push(out, Op::Readout { x: x.0, weights: weights.map(|w| w.0), offsets, mean, denom })
    }

    /// Mean cross-entropy of softmax(logits) against integer labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: Rc<Vec<usize>>) -> Var {
        let lv = self.value(logits);
        let n = lv.nrows().max(1) as f64;
        let mut probs = lv.clone();
        let mut loss = 0.0;
        for (mut row, &y) in probs.rows_mut().into_iter().zip(labels.iter()) {
            let lse = log_sum_exp(row.iter().copied());
            loss += lse - row[y];
            row.mapv_inplace(|z| (z - lse).exp());
        }
        let v = Array2::from_elem((1, 1), loss / n);
        self.push(v, Op::CrossEntropy { logits: logits.0, labels, probs })
    }

    pub fn row_normalize(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        let mut norms = Vec::with_capacity(v.nrows());
        for mut row in v.rows_mut() {
            let n = row.dot(&row).sqrt().max(1e-12);
            row.mapv_inplace(|z| z / n);
            norms.push(n);
        }
        self.push(v, Op::RowNormalize { x: x.0, norms })
    }

    /// Mean over (anchor, positive) terms of
    /// `-log( e^{phi_ap} / (e^{phi_ap} + sum_n e^{phi_an}) )` with
    /// `phi = <h_a, h_b> / temperature`. Zero when there are no terms.
    pub fn contrastive(&mut self, h: Var, pairs: Rc<Pairs>, temperature: f64) -> Var {
        let hv = self.value(h);
        let inv_temp = 1.0 / temperature;
        let phi = |a: usize, b: usize| hv.row(a).dot(&hv.row(b)) * inv_temp;
        let mut total = 0.0;
        for (k, &a) in pairs.anchors.iter().enumerate() {
            let negs: Vec<f64> = pairs.negatives[k].iter().map(|&n| phi(a, n)).collect();
            for &p in &pairs.positives[k] {
                let pp = phi(a, p);
                total += log_sum_exp(std::iter::once(pp).chain(negs.iter().copied())) - pp;
            }
        }
        let terms = pairs.num_terms();
        let v = Array2::from_elem((1, 1), if terms == 0 { 0.0 } else { total / terms as f64 });
        self.push(v, Op::Contrastive { h: h.0, pairs, inv_temp })
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Grads {
        let mut g: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[root.0] = Some(Array2::ones((1, 1)));
        fn acc(g: &mut [Option<Array2<f64>>], i: usize, d: Array2<f64>) {
            match &mut g[i] {
                Some(x) => *x += &d,
                slot => *slot = Some(d),
            }
        }
        for idx in (0..=root.0).rev() {
            let Some(dout) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            let val = |i: usize| &self.nodes[i].value;
            match &node.op {
                Op::Leaf => {
                    g[idx] = Some(dout);
                    continue;
                }
                Op::MatMul(a, b) => {
                    acc(&mut g, *a, dout.dot(&val(*b).t()));
                    acc(&mut g, *b, val(*a).t().dot(&dout));
                }
                Op::AddBias(x, b) => {
                    acc(&mut g, *b, dout.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut g, *x, dout);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, dout.clone());
                    acc(&mut g, *b, dout);
                }
                Op::Scale(x, c) => acc(&mut g, *x, dout * *c),
                Op::MulMask(x, m) => acc(&mut g, *x, dout * &**m),
                Op::MulRow(x, r) => {
                    let dr = (&dout * val(*x)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut g, *r, dr);
                    acc(&mut g, *x, dout * val(*r));
                }
                Op::Relu(x) => {
                    let mut d = dout;
                    d.zip_mut_with(val(*x), |d, &z| {
                        if z <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut g, *x, d);
                }
                Op::Sigmoid(x) => {
                    let mut d = dout;
                    d.zip_mut_with(&node.value, |d, &y| *d *= y * (1.0 - y));
                    acc(&mut g, *x, d);
                }
                Op::Concat(a, b) => {
                    let ca = val(*a).ncols();
                    acc(&mut g, *a, dout.slice(s![.., ..ca]).to_owned());
                    acc(&mut g, *b, dout.slice(s![.., ca..]).to_owned());
                }
                Op::Gather(x, rows) => {
                    let mut d = Array2::zeros(val(*x).raw_dim());
                    for (k, &r) in rows.iter().enumerate() {
                        let mut row = d.row_mut(r);
                        row += &dout.row(k);
                    }
                    acc(&mut g, *x, d);
                }
                Op::GinAggregate { h, eps, weights, topo } => {
                    let hv = val(*h);
                    let self_w = 1.0 + val(*eps)[[0, 0]];
                    let deps = (&dout * hv).sum();
                    let mut dh = &dout * self_w;
                    let w = weights.map(|w| val(w));
                    let mut dw = weights.map(|_| Array2::zeros((topo.edges.len(), 1)));
                    for (e, &(u, v)) in topo.edges.iter().enumerate() {
                        let we = w.map_or(1.0, |w| w[[e, 0]]);
                        if let Some(dw) = dw.as_mut() {
                            dw[[e, 0]] = dout.row(u).dot(&hv.row(v)) + dout.row(v).dot(&hv.row(u));
                        }
                        if we == 0.0 {
                            continue;
                        }
                        let (du, dv) = (dout.row(u).to_owned(), dout.row(v).to_owned());
                        dh.row_mut(v).scaled_add(we, &du);
                        dh.row_mut(u).scaled_add(we, &dv);
                    }
                    acc(&mut g, *h, dh);
                    acc(&mut g, *eps, Array2::from_elem((1, 1), deps));
                    if let (Some(wi), Some(dw)) = (weights, dw) {
                        acc(&mut g, *wi, dw);
                    }
                }
                Op::LayerNorm { x, normed, inv_std } => {
                    let d = normed.ncols() as f64;
                    let mut dx = dout.clone();
                    for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
                        let y = normed.row(i);
                        let mean_d = row.sum() / d;
                        let mean_dy = row.dot(&y) / d;
                        for (r, &yy) in row.iter_mut().zip(y.iter()) {
                            *r = inv_std[i] * (*r - mean_d - yy * mean_dy);
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::BatchNorm { x, normed, inv_std } => {
                    let n = normed.nrows().max(1) as f64;
                    let mut dx = dout.clone();
                    for (j, mut col) in dx.columns_mut().into_iter().enumerate() {
                        let y = normed.column(j);
                        let mean_d = col.sum() / n;
                        let mean_dy = col.dot(&y) / n;
                        for (r, &yy) in col.iter_mut().zip(y.iter()) {
                            *r = inv_std[j] * (*r - mean_d - yy * mean_dy);
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::NoisyOr { s, topo } => {
                    let sv = val(*s);
                    let mut ds = Array2::zeros(sv.raw_dim());
                    for (i, inc) in topo.incident.iter().enumerate() {
                        let di = dout[[i, 0]];
                        if di == 0.0 {
                            continue;
                        }
                        for &e in inc {
                            let others: f64 =
                                inc.iter().filter(|&&f| f != e).map(|&f| 1.0 - sv[[f, 0]]).product();
                            ds[[e, 0]] += di * others;
                        }
                    }
                    acc(&mut g, *s, ds);
                }
                Op::Readout { x, weights, offsets, mean, denom } => {
                    let xv = val(*x);
                    let w = weights.map(|w| val(w));
                    let mut dx = Array2::zeros(xv.raw_dim());
                    let mut dw = weights.map(|_| Array2::zeros((xv.nrows(), 1)));
                    for k in 0..offsets.len() - 1 {
                        let dk = dout.row(k);
                        let scale = if *mean { 1.0 / denom[k] } else { 1.0 };
                        // the floor is inactive only when the weight total exceeds it
                        let live = *mean && denom[k] > READOUT_FLOOR;
                        let out_dot = if live { dk.dot(&node.value.row(k)) } else { 0.0 };
                        for i in offsets[k]..offsets[k + 1] {
                            let wi = w.map_or(1.0, |w| w[[i, 0]]);
                            dx.row_mut(i).scaled_add(wi * scale, &dk);
                            if let Some(dw) = dw.as_mut() {
                                dw[[i, 0]] = (dk.dot(&xv.row(i)) - out_dot) * scale;
                            }
                        }
                    }
                    acc(&mut g, *x, dx);
                    if let (Some(wi), Some(dw)) = (weights, dw) {
                        acc(&mut g, *wi, dw);
                    }
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let n = probs.nrows().max(1) as f64;
                    let mut d = probs.clone();
                    for (i, &y) in labels.iter().enumerate() {
                        d[[i, y]] -= 1.0;
                    }
                    acc(&mut g, *logits, d * (dout[[0, 0]] / n));
                }
                Op::RowNormalize { x, norms } => {
                    let y = &node.value;
                    let mut dx = dout.clone();
                    for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
                        let proj = row.dot(&y.row(i));
                        for (r, &yy) in row.iter_mut().zip(y.row(i).iter()) {
                            *r = (*r - yy * proj) / norms[i];
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::Contrastive { h, pairs, inv_temp } => {
                    let hv = val(*h);
                    let mut dh = Array2::zeros(hv.raw_dim());
                    let terms = pairs.num_terms();
                    if terms > 0 {
                        let scale = dout[[0, 0]] / terms as f64;
                        let phi = |a: usize, b: usize| hv.row(a).dot(&hv.row(b)) * inv_temp;
                        for (k, &a) in pairs.anchors.iter().enumerate() {
                            let negs = &pairs.negatives[k];
                            let nphi: Vec<f64> = negs.iter().map(|&n| phi(a, n)).collect();
                            for &p in &pairs.positives[k] {
                                let pp = phi(a, p);
                                let lz = log_sum_exp(std::iter::once(pp).chain(nphi.iter().copied()));
                                // d/dphi_ap = softmax_p - 1, d/dphi_an = softmax_n
                                let gp = ((pp - lz).exp() - 1.0) * scale * inv_temp;
                                let (ha, hp) = (hv.row(a).to_owned(), hv.row(p).to_owned());
                                dh.row_mut(a).scaled_add(gp, &hp);
                                dh.row_mut(p).scaled_add(gp, &ha);
                                for (&n, &np) in negs.iter().zip(&nphi) {
                                    let gn = (np - lz).exp() * scale * inv_temp;
                                    let hn = hv.row(n).to_owned();
                                    dh.row_mut(a).scaled_add(gn, &hn);
                                    dh.row_mut(n).scaled_add(gn, &ha);
                                }
                            }
                        }
                    }
                    acc(&mut g, *h, dh);
                }
            }
        }
        Grads { g }
    }
}

pub struct Grads {
    g: Vec<Option<Array2<f64>>>,
}

impl Grads {
    /// Gradient of a leaf, or `None` if the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.g[v.0].as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central-difference gradient of `f` at `x`.
    fn numeric(x: &Array2<f64>, f: &dyn Fn(&Array2<f64>) -> f64) -> Array2<f64> {
        let h = 1e-6;
        let mut out = Array2::zeros(x.raw_dim());
        for idx in ndarray::indices(x.raw_dim()) {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            out[idx] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        out
    }

    fn check(x: Array2<f64>, build: &dyn Fn(&mut Tape, Var) -> Var) {
        let f = |v: &Array2<f64>| {
            let mut t = Tape::new();
            let xv = t.leaf(v.clone());
            let out = build(&mut t, xv);
            t.scalar(out)
        };
        let mut t = Tape::new();
        let xv = t.leaf(x.clone());
        let out = build(&mut t, xv);
        let grads = t.backward(out);
        let analytic = grads.get(xv).cloned().unwrap_or_else(|| Array2::zeros(x.raw_dim()));
        let num = numeric(&x, &f);
        let err = (&analytic - &num).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(err < 1e-7, "analytic {analytic:?}\nnumeric {num:?}");
    }

    /// Reduces a matrix to a scalar with fixed, uneven weights.
    fn probe(t: &mut Tape, x: Var) -> Var {
        let (r, c) = t.value(x).dim();
        let w = Array2::from_shape_fn((r, c), |(i, j)| 0.3 + 0.17 * i as f64 - 0.11 * j as f64);
        let m = t.mul_mask(x, w);
        let ones_c = t.leaf(Array2::ones((c, 1)));
        let ones_r = t.leaf(Array2::ones((1, r)));
        let col = t.matmul(m, ones_c);
        t.matmul(ones_r, col)
    }

    fn topo() -> Rc<Topology> {
        Rc::new(Topology::new(4, vec![(0, 1), (1, 2), (2, 0), (2, 3)]))
    }

    fn sample(r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0 + 0.013 * j as f64)
    }

    #[test]
    fn dense_ops() {
        let w = sample(3, 2);
        check(sample(4, 3), &|t, x| {
            let wv = t.leaf(w.clone());
            let y = t.matmul(x, wv);
            let b = t.leaf(array![[0.1, -0.2]]);
            let y = t.add_bias(y, b);
            let y = t.sigmoid(y);
            probe(t, y)
        });
        check(sample(4, 3), &|t, x| {
            let y = t.relu(x);
            let z = t.scale(x, 0.5);
            let y = t.add(y, z);
            let y = t.concat(y, x);
            probe(t, y)
        });
    }

    #[test]
    fn mul_row_grad_wrt_row() {
        check(array![[0.3, -0.7, 1.1]], &|t, r| {
            let x = t.leaf(sample(5, 3));
            let y = t.mul_row(x, r);
            probe(t, y)
        });
    }

    #[test]
    fn graph_ops() {
        let tp = topo();
        check(sample(4, 3), &|t, x| {
            let e = t.leaf(array![[0.2]]);
            let w = t.leaf(array![[0.5], [0.9], [0.1], [0.7]]);
            let y = t.gin_aggregate(x, e, Some(w), tp.clone());
            probe(t, y)
        });
        check(array![[0.5], [0.9], [0.1], [0.7]], &|t, w| {
            let x = t.leaf(sample(4, 3));
            let e = t.leaf(array![[0.2]]);
            let y = t.gin_aggregate(x, e, Some(w), tp.clone());
            probe(t, y)
        });
        check(array![[0.15]], &|t, e| {
            let x = t.leaf(sample(4, 3));
            let y = t.gin_aggregate(x, e, None, tp.clone());
            probe(t, y)
        });
        check(array![[0.5], [0.9], [0.1], [0.7]], &|t, s| {
            let y = t.noisy_or(s, tp.clone());
            probe(t, y)
        });
        check(sample(4, 3), &|t, x| {
            let g = t.gather(x, Rc::new(vec![2, 0, 2, 3]));
            probe(t, g)
        });
    }

    #[test]
    fn readout_grads() {
        let offsets = Rc::new(vec![0, 3, 5]);
        for mean in [true, false] {
            let off = offsets.clone();
            check(sample(5, 2), &|t, x| {
                let w = t.leaf(array![[0.2], [0.9], [0.4], [0.6], [0.3]]);
                let y = t.readout(x, Some(w), off.clone(), mean);
                probe(t, y)
            });
            let off = offsets.clone();
            check(array![[0.2], [0.9], [0.4], [0.6], [0.3]], &|t, w| {
                let x = t.leaf(sample(5, 2));
                let y = t.readout(x, Some(w), off.clone(), mean);
                probe(t, y)
            });
        }
    }

    #[test]
    fn normalization_grads() {
        check(sample(3, 4), &|t, x| {
            let y = t.layer_norm(x);
            probe(t, y)
        });
        check(sample(5, 3), &|t, x| {
            let y = t.batch_norm(x).0;
            probe(t, y)
        });
        check(sample(3, 4), &|t, x| {
            let y = t.row_normalize(x);
            probe(t, y)
        });
    }

    #[test]
    fn loss_grads() {
        let labels = Rc::new(vec![0, 2, 1]);
        check(sample(3, 3), &|t, x| t.cross_entropy(x, labels.clone()));
        let pairs = Rc::new(Pairs {
            anchors: vec![0, 3],
            positives: vec![vec![1, 2], vec![4]],
            negatives: vec![vec![3, 4], vec![0, 1, 2]],
        });
        check(sample(5, 3), &|t, x| {
            let n = t.row_normalize(x);
            t.contrastive(n, pairs.clone(), 0.7)
        });
    }

    #[test]
    fn cross_entropy_values() {
        let mut t = Tape::new();
        let x = t.leaf(Array2::zeros((2, 3)));
        let l = t.cross_entropy(x, Rc::new(vec![0, 1]));
        assert!((t.scalar(l) - 3f64.ln()).abs() < 1e-12);
    }
}
