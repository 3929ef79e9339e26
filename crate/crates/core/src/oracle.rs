//! Exact population checks over the bit model.
//!
//! Everything here enumerates the finite outcome space `(y, c, s)`; no
//! sampling is involved. Embeddings of a selected subgraph are modeled as the
//! one-hot code of the selected bit (or the unit-normalized concatenation of
//! both codes), similarity is the inner product, and the contrastive objective
//! is evaluated in its many-negatives limit:
//!
//! ```text
//! value = E[phi(anchor, positive)] - E_anchor[ log E_neg[ exp(phi(anchor, neg)) ] ]
//! ```
//!
//! with negatives drawn from the population of the other labels.

use serde::{Deserialize, Serialize};

use crate::scm::{
    corruption_for_strength, exact_joint, marginal_strengths, EnvParams, EnvironmentSet,
    JointTable, Slot,
};
use crate::{Error, Result, PROB_TOL};

/// Candidate output of a featurizer on a two-piece graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorChoice {
    Invariant,
    Spurious,
    Both,
}

impl SelectorChoice {
    pub const ALL: [SelectorChoice; 3] = [Self::Invariant, Self::Spurious, Self::Both];

    /// `Both` selects two pieces and so exceeds the single-piece size budget
    /// the objectives are constrained to.
    pub fn within_budget(self) -> bool {
        !matches!(self, Self::Both)
    }

    fn embed(self, k: usize, c: usize, s: usize) -> Vec<f64> {
        match self {
            Self::Invariant => one_hot(k, c),
            Self::Spurious => one_hot(k, s),
            Self::Both => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let mut v: Vec<f64> = one_hot(k, c).into_iter().map(|x| x * h).collect();
                v.extend(one_hot(k, s).into_iter().map(|x| x * h));
                v
            }
        }
    }
}

fn one_hot(k: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[i] = 1.0;
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How the population assistant predicts, which fixes the partition into
/// assistant-correct and assistant-incorrect cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionRule {
    /// Predicts the spurious bit.
    AssistantSpuriousBit,
    /// Predicts the invariant bit.
    AssistantInvariantBit,
    /// Bayes classifier of the mixed table, ties split uniformly.
    Bayes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "partition_rule")]
pub enum SamplingScheme {
    /// Positive pairs share the label and come from the whole mixture.
    CigaIntraclass,
    /// Positive pairs share the label, one member from each partition cell.
    GalaCrossPartition(PartitionRule),
}

/// Probability that the assistant is correct on each outcome.
pub fn correctness(table: &JointTable, rule: PartitionRule) -> JointTable {
    let k = table.num_classes;
    let mut out = JointTable::zeros(k);
    for y in 0..k {
        for c in 0..k {
            for s in 0..k {
                let p_correct = match rule {
                    PartitionRule::AssistantSpuriousBit => (s == y) as u8 as f64,
                    PartitionRule::AssistantInvariantBit => (c == y) as u8 as f64,
                    PartitionRule::Bayes => {
                        let scores: Vec<f64> = (0..k).map(|l| table.get(l, c, s)).collect();
                        let best = scores.iter().cloned().fold(f64::MIN, f64::max);
                        let winners: Vec<usize> =
                            (0..k).filter(|&l| (scores[l] - best).abs() <= PROB_TOL).collect();
                        if winners.contains(&y) {
                            1.0 / winners.len() as f64
                        } else {
                            0.0
                        }
                    }
                };
                out.add(y, c, s, p_correct);
            }
        }
    }
    out
}

/// Splits a table into unnormalized correct / incorrect cells.
pub fn partition_cells(table: &JointTable, rule: PartitionRule) -> (JointTable, JointTable) {
    let corr = correctness(table, rule);
    let mut pos = JointTable::zeros(table.num_classes);
    let mut neg = JointTable::zeros(table.num_classes);
    for (i, p) in table.probs.iter().enumerate() {
        pos.probs[i] = p * corr.probs[i];
        neg.probs[i] = p * (1.0 - corr.probs[i]);
    }
    (pos, neg)
}

/// Per-cell conditional statistics used to check partition alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mass: f64,
    /// `P(c = j | y)` indexed `[y][j]`.
    pub c_given_y: Vec<Vec<f64>>,
    pub p_c_eq_y: f64,
    pub p_s_eq_y: f64,
}

pub fn cell_stats(cell: &JointTable) -> CellStats {
    let k = cell.num_classes;
    let mass = cell.total();
    let mut c_given_y = vec![vec![0.0; k]; k];
    let mut label = vec![0.0; k];
    for (r, p) in cell.outcomes() {
        c_given_y[r.y][r.c_bit] += p;
        label[r.y] += p;
    }
    for (row, m) in c_given_y.iter_mut().zip(&label) {
        if *m > 0.0 {
            row.iter_mut().for_each(|v| *v /= m);
        }
    }
    let (inv, spu) = marginal_strengths(cell);
    let norm = if mass > 0.0 { mass } else { 1.0 };
    CellStats { mass, c_given_y, p_c_eq_y: inv / norm, p_s_eq_y: spu / norm }
}

/// Which featurizer drives the environment generation being simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Featurizer {
    /// Estimates the invariant piece as the invariant piece.
    Faithful,
    /// Estimates the invariant piece as the spurious one and vice versa.
    Reversed,
}

/// Population limit of recombining every sample's estimated invariant piece
/// with every other sample's estimated spurious piece, keeping the label of
/// the first.
pub fn augment_table(table: &JointTable, featurizer: Featurizer) -> JointTable {
    let k = table.num_classes;
    let mut c_marg = vec![0.0; k];
    let mut s_marg = vec![0.0; k];
    let mut ys = vec![vec![0.0; k]; k];
    let mut yc = vec![vec![0.0; k]; k];
    for (r, p) in table.outcomes() {
        c_marg[r.c_bit] += p;
        s_marg[r.s_bit] += p;
        ys[r.y][r.s_bit] += p;
        yc[r.y][r.c_bit] += p;
    }
    let mut out = JointTable::zeros(k);
    for y in 0..k {
        for c in 0..k {
            for s in 0..k {
                let p = match featurizer {
                    // kept piece i carries (y, s_i); partner j contributes c_j
                    Featurizer::Reversed => ys[y][s] * c_marg[c],
                    Featurizer::Faithful => yc[y][c] * s_marg[s],
                };
                out.add(y, c, s, p);
            }
        }
    }
    out
}

fn params_of_table(table: &JointTable) -> Result<EnvParams> {
    let k = table.num_classes;
    let (inv, spu) = marginal_strengths(table);
    EnvParams::new(corruption_for_strength(inv, k)?, corruption_for_strength(spu, k)?, k)
}

/// Environment generated from `mixed` by a featurizer that has the two
/// pieces backwards.
pub fn swap_augmentation(mixed: &EnvParams) -> Result<EnvParams> {
    params_of_table(&augment_table(&exact_joint(mixed), Featurizer::Reversed))
}

/// Environment generated from `mixed` by a featurizer that is exactly right.
pub fn faithful_augmentation(mixed: &EnvParams) -> Result<EnvParams> {
    params_of_table(&augment_table(&exact_joint(mixed), Featurizer::Faithful))
}

/// Which slot keeps a constant parameter across every environment of `set`,
/// i.e. which piece is invariant there. `None` when both or neither do.
pub fn invariant_slot(set: &EnvironmentSet) -> Option<Slot> {
    let first = set.envs[0];
    let alpha_fixed = set.envs.iter().all(|e| (e.alpha - first.alpha).abs() <= PROB_TOL);
    let beta_fixed = set.envs.iter().all(|e| (e.beta - first.beta).abs() <= PROB_TOL);
    match (alpha_fixed, beta_fixed) {
        (true, false) => Some(Slot::Invariant),
        (false, true) => Some(Slot::Spurious),
        _ => None,
    }
}

/// Builds a second pair of environments, with the roles of the two pieces
/// exchanged, whose mixture is indistinguishable from the mixture of `set`.
///
/// Input `{(alpha, b1), (alpha, b2)}` produces `{(alpha - d, m), (alpha + d, m)}`
/// with `m = (b1 + b2) / 2` and `d = |b2 - b1| / 2`, shrunk to stay in `[0, 1]`.
pub fn construct_twin(set: &EnvironmentSet) -> Result<EnvironmentSet> {
    set.validate()?;
    if set.envs.len() != 2 {
        return Err(Error::NoTwin(format!("expected two environments, got {}", set.envs.len())));
    }
    let (e1, e2) = (set.envs[0], set.envs[1]);
    if (e1.alpha - e2.alpha).abs() > PROB_TOL {
        return Err(Error::AlphaMismatch(e1.alpha, e2.alpha));
    }
    if (set.weights[0] - set.weights[1]).abs() > PROB_TOL {
        return Err(Error::NoTwin("twin construction assumes equally sized environments".into()));
    }
    let alpha = e1.alpha;
    let alpha_twin = 0.5 * (e1.beta + e2.beta);
    let delta = (0.5 * (e2.beta - e1.beta).abs()).min(alpha).min(1.0 - alpha);
    if delta <= PROB_TOL {
        return Err(Error::NoTwin(
            "spurious parameters do not vary, so the twin coincides with the original".into(),
        ));
    }
    let k = e1.num_classes;
    EnvironmentSet::uniform(vec![
        EnvParams::new(alpha - delta, alpha_twin, k)?,
        EnvParams::new(alpha + delta, alpha_twin, k)?,
    ])
}

/// Exact contrastive objective of a selector under a sampling scheme.
pub fn population_contrastive(
    set: &EnvironmentSet,
    selector: SelectorChoice,
    scheme: SamplingScheme,
) -> Result<f64> {
    set.validate()?;
    let table = set.mixture_table();
    match scheme {
        SamplingScheme::CigaIntraclass => Ok(directed_value(&table, &table, &table, selector)),
        SamplingScheme::GalaCrossPartition(rule) => {
            let (pos, neg) = partition_cells(&table, rule);
            if pos.total() <= PROB_TOL {
                return Err(Error::EmptyCell("assistant-correct"));
            }
            if neg.total() <= PROB_TOL {
                return Err(Error::EmptyCell("assistant-incorrect"));
            }
            let forward = directed_value(&pos, &neg, &table, selector);
            let backward = directed_value(&neg, &pos, &table, selector);
            Ok(0.5 * (forward + backward))
        }
    }
}

/// Anchors from `anchors`, positives from `partners` with the same label,
/// negatives from `population` with a different label.
fn directed_value(
    anchors: &JointTable,
    partners: &JointTable,
    population: &JointTable,
    selector: SelectorChoice,
) -> f64 {
    let k = anchors.num_classes;
    let a_lab = anchors.label_marginal();
    let p_lab = partners.label_marginal();
    let pop_lab = population.label_marginal();
    let valid: Vec<usize> = (0..k).filter(|&y| a_lab[y] > PROB_TOL && p_lab[y] > PROB_TOL).collect();
    let norm: f64 = valid.iter().map(|&y| a_lab[y]).sum();
    let emb = |c: usize, s: usize| selector.embed(k, c, s);

    let mut value = 0.0;
    for &y in &valid {
        let neg_mass: f64 = (0..k).filter(|&l| l != y).map(|l| pop_lab[l]).sum();
        for ca in 0..k {
            for sa in 0..k {
                let pa = anchors.get(y, ca, sa) / a_lab[y];
                if pa == 0.0 {
                    continue;
                }
                let ha = emb(ca, sa);
                let mut align = 0.0;
                let mut spread = 0.0;
                for c in 0..k {
                    for s in 0..k {
                        let h = emb(c, s);
                        let phi = dot(&ha, &h);
                        align += partners.get(y, c, s) / p_lab[y] * phi;
                        let pn: f64 =
                            (0..k).filter(|&l| l != y).map(|l| population.get(l, c, s)).sum();
                        spread += pn / neg_mass * phi.exp();
                    }
                }
                value += a_lab[y] / norm * pa * (align - spread.ln());
            }
        }
    }
    value
}

/// Validity of the gala cross-partition rule used by the scan.
///
/// Off the diagonal the assistant tracks the spurious bit, which is the
/// partition under which the invariant correlation is identical in both
/// cells. On the diagonal no rule can tell the pieces apart (the twin is
/// indistinguishable), so the symmetric Bayes assistant is used.
pub fn premise_rule(a: f64, b: f64) -> PartitionRule {
    if (a - b).abs() <= PROB_TOL {
        PartitionRule::Bayes
    } else {
        PartitionRule::AssistantSpuriousBit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Invariant,
    Spurious,
    Tie,
}

/// Values of every selector under one scheme at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub scheme: SamplingScheme,
    pub invariant: f64,
    pub spurious: f64,
    /// Reported for reference; excluded from the argmax by the size budget.
    pub both: f64,
    pub winner: Winner,
    /// `invariant - spurious`.
    pub margin: f64,
}

impl SchemeOutcome {
    fn evaluate(set: &EnvironmentSet, scheme: SamplingScheme) -> Result<Self> {
        let inv = population_contrastive(set, SelectorChoice::Invariant, scheme)?;
        let spu = population_contrastive(set, SelectorChoice::Spurious, scheme)?;
        let both = population_contrastive(set, SelectorChoice::Both, scheme)?;
        let margin = inv - spu;
        let winner = if margin.abs() <= TIE_TOL {
            Winner::Tie
        } else if margin > 0.0 {
            Winner::Invariant
        } else {
            Winner::Spurious
        };
        Ok(Self { scheme, invariant: inv, spurious: spu, both, winner, margin })
    }
}

/// Gap below which two selector values count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub a: f64,
    pub b: f64,
    pub ciga: SchemeOutcome,
    /// Gala sampling with the cross-partition rule from [`premise_rule`].
    pub gala: SchemeOutcome,
    /// Gala sampling with the Bayes assistant on the mixed table, i.e. an
    /// assistant that predicts with whichever bit dominates.
    pub gala_bayes: SchemeOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub num_classes: usize,
    pub points: Vec<ScanPoint>,
}

/// A claim about the scan that did not hold at some grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanViolation {
    pub a: f64,
    pub b: f64,
    pub claim: String,
}

impl ScanReport {
    /// Gala's invariant selector wins strictly off the diagonal and ties on
    /// it; ciga's winner is whichever piece is stronger, tying on the diagonal.
    pub fn violations(&self) -> Vec<ScanViolation> {
        let mut out = Vec::new();
        for p in &self.points {
            let diag = (p.a - p.b).abs() <= PROB_TOL;
            let mut fail = |claim: &str| {
                out.push(ScanViolation { a: p.a, b: p.b, claim: claim.to_string() })
            };
            if diag {
                if p.gala.winner != Winner::Tie {
                    fail("gala ties on the diagonal");
                }
                if p.ciga.winner != Winner::Tie {
                    fail("ciga ties on the diagonal");
                }
                continue;
            }
            if p.gala.winner != Winner::Invariant {
                fail("gala invariant selector wins strictly");
            }
            let expect = if p.b > p.a { Winner::Spurious } else { Winner::Invariant };
            if p.ciga.winner != expect {
                fail("ciga picks the stronger piece");
            }
        }
        out
    }

    pub fn count(&self, f: impl Fn(&ScanPoint) -> bool) -> usize {
        self.points.iter().filter(|p| f(p)).count()
    }
}

/// Evaluates both sampling schemes at every `(a, b)` strength pair.
pub fn identifiability_scan(grid: &[(f64, f64)], num_classes: usize) -> Result<ScanReport> {
    let floor = 1.0 / num_classes as f64;
    let points = grid
        .iter()
        .map(|&(a, b)| {
            if a <= floor || b <= floor || a > 1.0 || b > 1.0 {
                return Err(Error::InvalidParam(format!(
                    "grid point ({a}, {b}) outside ({floor}, 1]^2"
                )));
            }
            let set = EnvironmentSet::uniform(vec![EnvParams::from_strengths(a, b, num_classes)?])?;
            Ok(ScanPoint {
                a,
                b,
                ciga: SchemeOutcome::evaluate(&set, SamplingScheme::CigaIntraclass)?,
                gala: SchemeOutcome::evaluate(
                    &set,
                    SamplingScheme::GalaCrossPartition(premise_rule(a, b)),
                )?,
                gala_bayes: SchemeOutcome::evaluate(
                    &set,
                    SamplingScheme::GalaCrossPartition(PartitionRule::Bayes),
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanReport { num_classes, points })
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Full Cartesian grid over `values x values`.
pub fn square_grid(values: &[f64]) -> Vec<(f64, f64)> {
    values.iter().flat_map(|&a| values.iter().map(move |&b| (a, b))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    fn strengths(e: &EnvParams) -> (f64, f64) {
        e.strengths()
    }

    #[test]
    fn reversed_featurizer_destroys_invariance() {
        let v = swap_augmentation(&EnvParams::binary(0.25, 0.15).unwrap()).unwrap();
        assert!(close(v.alpha, 0.5) && close(v.beta, 0.15), "{v:?}");
        let v = swap_augmentation(&EnvParams::binary(0.1, 0.5).unwrap()).unwrap();
        assert!(close(v.alpha, 0.5) && close(v.beta, 0.5));
        let e = EnvParams::from_strengths(0.8, 0.7, 3).unwrap();
        let (inv, spu) = strengths(&swap_augmentation(&e).unwrap());
        assert!(close(inv, 1.0 / 3.0) && close(spu, 0.7));
    }

    #[test]
    fn faithful_featurizer_uniformizes_spurious() {
        let v = faithful_augmentation(&EnvParams::binary(0.25, 0.15).unwrap()).unwrap();
        assert!(close(v.alpha, 0.25) && close(v.beta, 0.5));
        let v = faithful_augmentation(&EnvParams::binary(0.5, 0.5).unwrap()).unwrap();
        assert!(close(v.alpha, 0.5) && close(v.beta, 0.5));
        let v = faithful_augmentation(&EnvParams::binary(0.0, 0.0).unwrap()).unwrap();
        assert!(close(v.alpha, 0.0) && close(v.beta, 0.5));
    }

    #[test]
    fn augmented_table_is_two_piece() {
        let e = EnvParams::from_strengths(0.8, 0.9, 3).unwrap();
        let aug = augment_table(&exact_joint(&e), Featurizer::Reversed);
        let v = swap_augmentation(&e).unwrap();
        assert!(aug.max_abs_diff(&exact_joint(&v)) <= 1e-12);
    }

    #[test]
    fn twin_examples() {
        let set = EnvironmentSet::uniform(vec![
            EnvParams::binary(0.2, 0.1).unwrap(),
            EnvParams::binary(0.2, 0.3).unwrap(),
        ])
        .unwrap();
        let twin = construct_twin(&set).unwrap();
        assert!(close(twin.envs[0].alpha, 0.1) && close(twin.envs[0].beta, 0.2));
        assert!(close(twin.envs[1].alpha, 0.3) && close(twin.envs[1].beta, 0.2));
        let target = exact_joint(&EnvParams::binary(0.2, 0.2).unwrap());
        assert!(twin.mixture_table().max_abs_diff(&target) <= 1e-12);
        assert!(set.mixture_table().max_abs_diff(&target) <= 1e-12);
        assert_eq!(invariant_slot(&set), Some(Slot::Invariant));
        assert_eq!(invariant_slot(&twin), Some(Slot::Spurious));

        let set = EnvironmentSet::uniform(vec![
            EnvParams::binary(0.25, 0.1).unwrap(),
            EnvParams::binary(0.25, 0.2).unwrap(),
        ])
        .unwrap();
        let twin = construct_twin(&set).unwrap();
        assert!(close(twin.envs[0].alpha, 0.2) && close(twin.envs[0].beta, 0.15));
        assert!(close(twin.envs[1].alpha, 0.3) && close(twin.envs[1].beta, 0.15));
        assert!(twin.mixture_table().max_abs_diff(&set.mixture_table()) <= 1e-12);
    }

    #[test]
    fn degenerate_twin_rejected() {
        let e = EnvParams::binary(0.3, 0.3).unwrap();
        let set = EnvironmentSet::uniform(vec![e, e]).unwrap();
        assert!(matches!(construct_twin(&set), Err(Error::NoTwin(_))));
    }

    #[test]
    fn twin_spread_shrinks_at_the_boundary() {
        let set = EnvironmentSet::uniform(vec![
            EnvParams::binary(0.05, 0.1).unwrap(),
            EnvParams::binary(0.05, 0.5).unwrap(),
        ])
        .unwrap();
        let twin = construct_twin(&set).unwrap();
        assert!(close(twin.envs[0].alpha, 0.0) && close(twin.envs[1].alpha, 0.1));
        assert!(twin.mixture_table().max_abs_diff(&set.mixture_table()) <= 1e-12);
        let set = EnvironmentSet::uniform(vec![
            EnvParams::binary(0.0, 0.1).unwrap(),
            EnvParams::binary(0.0, 0.5).unwrap(),
        ])
        .unwrap();
        assert!(construct_twin(&set).is_err());
    }

    fn single(a: f64, b: f64) -> EnvironmentSet {
        EnvironmentSet::uniform(vec![EnvParams::from_strengths(a, b, 3).unwrap()]).unwrap()
    }

    #[test]
    fn ciga_prefers_the_stronger_spurious_piece() {
        let set = single(0.8, 0.9);
        let inv = population_contrastive(&set, SelectorChoice::Invariant, SamplingScheme::CigaIntraclass).unwrap();
        let spu = population_contrastive(&set, SelectorChoice::Spurious, SamplingScheme::CigaIntraclass).unwrap();
        assert!(spu > inv);
    }

    #[test]
    fn gala_prefers_invariant_under_spurious_partition() {
        let set = single(0.8, 0.9);
        let scheme = SamplingScheme::GalaCrossPartition(PartitionRule::AssistantSpuriousBit);
        let inv = population_contrastive(&set, SelectorChoice::Invariant, scheme).unwrap();
        let spu = population_contrastive(&set, SelectorChoice::Spurious, scheme).unwrap();
        assert!(inv > spu);
    }

    #[test]
    fn equal_strengths_tie_under_every_scheme() {
        let set = single(0.7, 0.7);
        for scheme in [
            SamplingScheme::CigaIntraclass,
            SamplingScheme::GalaCrossPartition(PartitionRule::Bayes),
        ] {
            let inv = population_contrastive(&set, SelectorChoice::Invariant, scheme).unwrap();
            let spu = population_contrastive(&set, SelectorChoice::Spurious, scheme).unwrap();
            assert!((inv - spu).abs() <= TIE_TOL, "{scheme:?}: {inv} vs {spu}");
        }
    }

    #[test]
    fn one_hot_closed_form_under_ciga() {
        // Invariant selector, strength a: alignment a^2 + (1-a)^2/2; a same-label
        // anchor bit meets (1-a)/2 matching negatives, an off-label one a/2 + (1-a)/4.
        let a: f64 = 0.8;
        let e1 = std::f64::consts::E - 1.0;
        let align = a * a + (1.0 - a).powi(2) / 2.0;
        let spread = a * (1.0 + e1 * (1.0 - a) / 2.0).ln()
            + (1.0 - a) * (1.0 + e1 * (a / 2.0 + (1.0 - a) / 4.0)).ln();
        let v = population_contrastive(&single(a, 0.6), SelectorChoice::Invariant, SamplingScheme::CigaIntraclass)
            .unwrap();
        assert!((v - (align - spread)).abs() < 1e-12, "{v} vs {}", align - spread);
    }

    #[test]
    fn empty_cell_rejected() {
        let set = single(0.8, 1.0);
        let scheme = SamplingScheme::GalaCrossPartition(PartitionRule::AssistantSpuriousBit);
        assert!(matches!(
            population_contrastive(&set, SelectorChoice::Invariant, scheme),
            Err(Error::EmptyCell(_))
        ));
    }

    #[test]
    fn partition_alignment_under_spurious_rule() {
        let table = single(0.7, 0.9).mixture_table();
        let (pos, neg) = partition_cells(&table, PartitionRule::AssistantSpuriousBit);
        let (sp, sn) = (cell_stats(&pos), cell_stats(&neg));
        assert!(close(sp.p_s_eq_y, 1.0) && close(sn.p_s_eq_y, 0.0));
        for y in 0..3 {
            for c in 0..3 {
                assert!(close(sp.c_given_y[y][c], sn.c_given_y[y][c]));
            }
        }
    }

    #[test]
    fn scan_on_table_one_datasets() {
        let grid = [(0.8, 0.6), (0.8, 0.7), (0.8, 0.9), (0.7, 0.9)];
        let report = identifiability_scan(&grid, 3).unwrap();
        assert!(report.points.iter().all(|p| p.gala.winner == Winner::Invariant));
        assert_eq!(report.points[0].ciga.winner, Winner::Invariant);
        assert_eq!(report.points[3].ciga.winner, Winner::Spurious);
        let diag = identifiability_scan(&[(0.7, 0.7)], 3).unwrap();
        assert_eq!(diag.points[0].gala.winner, Winner::Tie);
        assert_eq!(diag.points[0].ciga.winner, Winner::Tie);
        assert!(report.violations().is_empty());
    }

    #[test]
    fn bayes_assistant_follows_the_dominant_piece() {
        // With the invariant piece dominant, the Bayes assistant is the
        // invariant-bit rule and the cross-partition objective then favors
        // the spurious selector.
        let report = identifiability_scan(&[(0.8, 0.6), (0.7, 0.9)], 3).unwrap();
        assert_eq!(report.points[0].gala_bayes.winner, Winner::Spurious);
        assert_eq!(report.points[1].gala_bayes.winner, Winner::Invariant);
        let table = single(0.8, 0.6).mixture_table();
        let bayes = correctness(&table, PartitionRule::Bayes);
        let inv = correctness(&table, PartitionRule::AssistantInvariantBit);
        assert!(bayes.max_abs_diff(&inv) <= 1e-12);
    }

    #[test]
    fn scan_rejects_uninformative_points() {
        assert!(identifiability_scan(&[(1.0 / 3.0, 0.8)], 3).is_err());
    }
}
