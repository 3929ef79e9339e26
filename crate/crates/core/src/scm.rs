//! The two-piece structural causal model at the bit level.
//!
//! A label `y` is drawn uniformly from `num_classes` values. The invariant
//! bit equals `y` unless it is corrupted with probability `alpha`, in which
//! case it is redrawn (binary: flipped; multi-class: redrawn uniformly over
//! all classes, so it can land back on `y`). The spurious bit follows the same
//! rule with `beta`. The two bits are independent given `y`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, PROB_TOL};

/// Which of the two generated pieces a parameter or bit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Invariant,
    Spurious,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub alpha: f64,
    pub beta: f64,
    pub num_classes: usize,
}

impl EnvParams {
    pub fn new(alpha: f64, beta: f64, num_classes: usize) -> Result<Self> {
        let p = Self { alpha, beta, num_classes };
        p.validate()?;
        Ok(p)
    }

    pub fn binary(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, 2)
    }

    pub fn ternary(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, 3)
    }

    /// Builds parameters from co-occurrence strengths `P(bit = y)`.
    pub fn from_strengths(a: f64, b: f64, num_classes: usize) -> Result<Self> {
        Self::new(
            corruption_for_strength(a, num_classes)?,
            corruption_for_strength(b, num_classes)?,
            num_classes,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.num_classes) {
            return Err(Error::InvalidParam(format!(
                "num_classes must be 2 or 3, got {}",
                self.num_classes
            )));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(Error::InvalidParam(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn corruption(&self, which: Slot) -> f64 {
        match which {
            Slot::Invariant => self.alpha,
            Slot::Spurious => self.beta,
        }
    }

    /// `(P(c = y), P(s = y))`.
    pub fn strengths(&self) -> (f64, f64) {
        (
            bit_corruption_prob(self, Slot::Invariant),
            bit_corruption_prob(self, Slot::Spurious),
        )
    }
}

/// Probability that the realized bit in `which` equals the label.
///
/// Binary corruption flips the bit, so the bit survives with `1 - alpha`.
/// Multi-class corruption redraws uniformly, which hits the label again with
/// probability `1 / num_classes`.
pub fn bit_corruption_prob(env: &EnvParams, which: Slot) -> f64 {
    let rho = env.corruption(which);
    if env.num_classes == 2 {
        1.0 - rho
    } else {
        1.0 - rho + rho / env.num_classes as f64
    }
}

/// Inverse of [`bit_corruption_prob`]: the corruption parameter giving
/// co-occurrence strength `strength`.
pub fn corruption_for_strength(strength: f64, num_classes: usize) -> Result<f64> {
    let k = num_classes as f64;
    let floor = if num_classes == 2 { 0.0 } else { 1.0 / k };
    if !(floor - PROB_TOL..=1.0 + PROB_TOL).contains(&strength) {
        return Err(Error::InvalidParam(format!(
            "strength {strength} outside [{floor}, 1] for {num_classes} classes"
        )));
    }
    let rho = if num_classes == 2 {
        1.0 - strength
    } else {
        (1.0 - strength) * k / (k - 1.0)
    };
    Ok(rho.clamp(0.0, 1.0))
}

/// Conditional distribution `P(bit = j | y)` for a bit with corruption `rho`.
pub fn bit_conditional(rho: f64, num_classes: usize, y: usize, bit: usize) -> f64 {
    let k = num_classes as f64;
    if num_classes == 2 {
        if bit == y {
            1.0 - rho
        } else {
            rho
        }
    } else if bit == y {
        1.0 - rho + rho / k
    } else {
        rho / k
    }
}

/// One realized draw of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitRecord {
    pub y: usize,
    pub c_bit: usize,
    pub s_bit: usize,
}

impl BitRecord {
    pub fn bit(&self, which: Slot) -> usize {
        match which {
            Slot::Invariant => self.c_bit,
            Slot::Spurious => self.s_bit,
        }
    }
}

/// Mixture of environments with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSet {
    pub envs: Vec<EnvParams>,
    pub weights: Vec<f64>,
}

impl EnvironmentSet {
    pub fn uniform(envs: Vec<EnvParams>) -> Result<Self> {
        let n = envs.len();
        let weights = vec![1.0 / n.max(1) as f64; n];
        Self::weighted(envs, weights)
    }

    pub fn weighted(envs: Vec<EnvParams>, weights: Vec<f64>) -> Result<Self> {
        let set = Self { envs, weights };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.envs.is_empty() {
            return Err(Error::InvalidParam("environment set is empty".into()));
        }
        if self.weights.len() != self.envs.len() {
            return Err(Error::InvalidParam(format!(
                "{} weights for {} environments",
                self.weights.len(),
                self.envs.len()
            )));
        }
        let k = self.envs[0].num_classes;
        for e in &self.envs {
            e.validate()?;
            if e.num_classes != k {
                return Err(Error::InvalidParam("environments disagree on num_classes".into()));
            }
        }
        if self.weights.iter().any(|w| *w < 0.0 || w.is_nan()) {
            return Err(Error::InvalidParam("negative mixture weight".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidParam(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.envs[0].num_classes
    }

    /// Mixture of the per-environment joint tables, entry by entry.
    pub fn mixture_table(&self) -> JointTable {
        let k = self.num_classes();
        let mut probs = vec![0.0; k * k * k];
        for (env, w) in self.envs.iter().zip(&self.weights) {
            let t = exact_joint(env);
            for (acc, p) in probs.iter_mut().zip(&t.probs) {
                *acc += w * p;
            }
        }
        JointTable { num_classes: k, probs }
    }
}

/// Exact probability table over `(y, c_bit, s_bit)`, stored densely with
/// index `(y * k + c) * k + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub num_classes: usize,
    pub probs: Vec<f64>,
}

impl JointTable {
    pub fn zeros(num_classes: usize) -> Self {
        Self { num_classes, probs: vec![0.0; num_classes.pow(3)] }
    }

    /// Every cell equal to `1 / k^3`: label, invariant and spurious bits all
    /// independent and uniform.
    pub fn uniform(num_classes: usize) -> Self {
        let n = num_classes.pow(3);
        Self { num_classes, probs: vec![1.0 / n as f64; n] }
    }

    #[inline]
    pub fn index(&self, y: usize, c: usize, s: usize) -> usize {
        let k = self.num_classes;
        (y * k + c) * k + s
    }

    pub fn get(&self, y: usize, c: usize, s: usize) -> f64 {
        self.probs[self.index(y, c, s)]
    }

    pub fn add(&mut self, y: usize, c: usize, s: usize, p: f64) {
        let i = self.index(y, c, s);
        self.probs[i] += p;
    }

    /// Iterates `(record, probability)` over the full outcome space.
    pub fn outcomes(&self) -> impl Iterator<Item = (BitRecord, f64)> + '_ {
        let k = self.num_classes;
        (0..k).flat_map(move |y| {
            (0..k).flat_map(move |c| {
                (0..k).map(move |s| (BitRecord { y, c_bit: c, s_bit: s }, self.get(y, c, s)))
            })
        })
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn label_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_classes];
        for (r, p) in self.outcomes() {
            m[r.y] += p;
        }
        m
    }

    /// Exchanges the roles of the invariant and spurious bits.
    pub fn swap_roles(&self) -> Self {
        let k = self.num_classes;
        let mut out = Self::zeros(k);
        for (r, p) in self.outcomes() {
            out.add(r.y, r.s_bit, r.c_bit, p);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.num_classes, other.num_classes);
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Accumulates a finite sample into an empirical table.
    pub fn from_records<'a>(num_classes: usize, records: impl IntoIterator<Item = &'a BitRecord>) -> Self {
        let mut t = Self::zeros(num_classes);
        let mut n = 0usize;
        for r in records {
            t.add(r.y, r.c_bit, r.s_bit, 1.0);
            n += 1;
        }
        if n > 0 {
            for p in &mut t.probs {
                *p /= n as f64;
            }
        }
        t
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

pub fn exact_joint(env: &EnvParams) -> JointTable {
    let k = env.num_classes;
    let py = 1.0 / k as f64;
    let mut t = JointTable::zeros(k);
    for y in 0..k {
        for c in 0..k {
            let pc = bit_conditional(env.alpha, k, y, c);
            for s in 0..k {
                let ps = bit_conditional(env.beta, k, y, s);
                t.add(y, c, s, py * pc * ps);
            }
        }
    }
    t
}

/// Collapses environments that share the invariant parameter into one.
pub fn mix_environments(set: &EnvironmentSet) -> Result<EnvParams> {
    set.validate()?;
    let alpha = set.envs[0].alpha;
    for e in &set.envs[1..] {
        if (e.alpha - alpha).abs() > PROB_TOL {
            return Err(Error::AlphaMismatch(alpha, e.alpha));
        }
    }
    let beta: f64 = set.envs.iter().zip(&set.weights).map(|(e, w)| w * e.beta).sum();
    EnvParams::new(alpha, beta.clamp(0.0, 1.0), set.num_classes())
}

/// `(P(c = y), P(s = y))` read off a table.
pub fn marginal_strengths(table: &JointTable) -> (f64, f64) {
    let mut inv = 0.0;
    let mut spu = 0.0;
    for (r, p) in table.outcomes() {
        if r.c_bit == r.y {
            inv += p;
        }
        if r.s_bit == r.y {
            spu += p;
        }
    }
    (inv, spu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= PROB_TOL
    }

    /// Direct simulation of the multi-class corruption rule.
    fn monte_carlo_strength(rho: f64, draws: usize) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut hits = 0usize;
        for _ in 0..draws {
            let y = rng.gen_range(0..3);
            let bit = if rng.gen::<f64>() < rho { rng.gen_range(0..3) } else { y };
            hits += (bit == y) as usize;
        }
        hits as f64 / draws as f64
    }

    #[test]
    fn corruption_prob_examples() {
        let e = EnvParams::binary(0.0, 0.0).unwrap();
        assert_eq!(bit_corruption_prob(&e, Slot::Invariant), 1.0);
        let e = EnvParams::binary(0.25, 0.0).unwrap();
        assert!(close(bit_corruption_prob(&e, Slot::Invariant), 0.75));
        let e = EnvParams::ternary(0.3, 0.0).unwrap();
        assert!(close(bit_corruption_prob(&e, Slot::Invariant), 0.8));
    }

    #[test]
    fn ternary_strength_matches_simulation() {
        let mc = monte_carlo_strength(0.3, 1_000_000);
        assert!((mc - 0.8).abs() < 2e-3, "mc = {mc}");
    }

    #[test]
    fn joint_deterministic_bits() {
        let t = exact_joint(&EnvParams::binary(0.0, 0.0).unwrap());
        for y in 0..2 {
            assert!(close(t.get(y, y, y), 0.5));
        }
        assert!(close(t.total(), 1.0));
    }

    #[test]
    fn joint_binary_four_cell_expressions() {
        let (a, b) = (0.25, 0.15);
        let t = exact_joint(&EnvParams::binary(a, b).unwrap());
        let mut cells = [0.0; 4];
        for (r, p) in t.outcomes() {
            let idx = (r.c_bit != r.y) as usize + 2 * (r.s_bit != r.y) as usize;
            cells[idx] += p;
        }
        assert!(close(cells[0], (1.0 - a) * (1.0 - b)));
        assert!(close(cells[1], a * (1.0 - b)));
        assert!(close(cells[2], (1.0 - a) * b));
        assert!(close(cells[3], a * b));
        assert!(close(cells[0], 0.6375));
        assert!(close(cells[1], 0.2125));
        assert!(close(cells[2], 0.1125));
        assert!(close(cells[3], 0.0375));
    }

    #[test]
    fn joint_ternary_product_structure() {
        let t = exact_joint(&EnvParams::ternary(0.3, 0.3).unwrap());
        for y in 0..3 {
            for c in 0..3 {
                for s in 0..3 {
                    let pc = if c == y { 0.8 } else { 0.1 };
                    let ps = if s == y { 0.8 } else { 0.1 };
                    assert!(close(t.get(y, c, s), pc * ps / 3.0));
                }
            }
        }
    }

    #[test]
    fn mixing_examples() {
        let set = EnvironmentSet::uniform(vec![
            EnvParams::binary(0.25, 0.1).unwrap(),
            EnvParams::binary(0.25, 0.2).unwrap(),
        ])
        .unwrap();
        let m = mix_environments(&set).unwrap();
        assert!(close(m.alpha, 0.25) && close(m.beta, 0.15));

        let set = EnvironmentSet::uniform(vec![
            EnvParams::binary(0.2, 0.1).unwrap(),
            EnvParams::binary(0.2, 0.3).unwrap(),
        ])
        .unwrap();
        let m = mix_environments(&set).unwrap();
        assert!(close(m.alpha, 0.2) && close(m.beta, 0.2));

        let one = EnvParams::ternary(0.4, 0.7).unwrap();
        let m = mix_environments(&EnvironmentSet::uniform(vec![one]).unwrap()).unwrap();
        assert_eq!(m, one);
    }

    #[test]
    fn mixing_rejects_differing_alpha() {
        let set = EnvironmentSet::uniform(vec![
            EnvParams::binary(0.2, 0.1).unwrap(),
            EnvParams::binary(0.3, 0.1).unwrap(),
        ])
        .unwrap();
        assert!(matches!(mix_environments(&set), Err(Error::AlphaMismatch(..))));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let e = EnvParams::binary(0.2, 0.1).unwrap();
        assert!(EnvironmentSet::weighted(vec![e, e], vec![0.5, 0.6]).is_err());
        assert!(EnvironmentSet::weighted(vec![], vec![]).is_err());
    }

    #[test]
    fn strengths_examples() {
        let t = exact_joint(&EnvParams::binary(0.0, 0.0).unwrap());
        assert_eq!(marginal_strengths(&t), (1.0, 1.0));
        let (inv, spu) = marginal_strengths(&exact_joint(&EnvParams::binary(0.25, 0.15).unwrap()));
        assert!(close(inv, 0.75) && close(spu, 0.85));
        let (inv, spu) = marginal_strengths(&JointTable::uniform(3));
        assert!(close(inv, 1.0 / 3.0) && close(spu, 1.0 / 3.0));
    }

    #[test]
    fn strength_parameterization_round_trip() {
        let e = EnvParams::from_strengths(0.8, 0.9, 3).unwrap();
        assert!(close(e.alpha, 0.3));
        assert!(close(e.beta, 0.15));
        let e = EnvParams::from_strengths(1.0 / 3.0, 1.0, 3).unwrap();
        assert!(close(e.alpha, 1.0) && close(e.beta, 0.0));
        assert!(EnvParams::from_strengths(0.2, 0.9, 3).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(EnvParams::binary(-0.1, 0.0).is_err());
        assert!(EnvParams::binary(0.0, 1.1).is_err());
        assert!(EnvParams::new(0.1, 0.1, 4).is_err());
    }
}
