//! Pass/fail checks over exact oracle values, numerical hygiene and suite
//! results.

use gala_core::io::{read_dataset, write_dataset};
use gala_core::oracle::{construct_twin, identifiability_scan, linspace, square_grid, swap_augmentation, Winner};
use gala_core::scm::{exact_joint, marginal_strengths, mix_environments};
use gala_core::synth::build_splits;
use gala_core::{EnvParams, EnvironmentSet, Slot};
use gala_train::model::{classify_on, encode, featurize_on, GraphBatch, ModelConfig, ModelParams, Pass};
use gala_train::objectives::{
    contrastive_loss, contrastive_on, sample_pairs_ciga, sample_pairs_gala, CellTag, ContrastConfig, GalaSampling, PairAssignment,
    Similarity,
};
use gala_train::tape::{Pairs, Tape};
use gala_train::trainer::{Method, PENALTY_GRID};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::spec::{Dataset, ExperimentSpec, Sweeps, TrainSettings};
use crate::suite::SuiteReport;

pub const EXACT_TOL: f64 = 1e-12;
pub const GRADIENT_REL_TOL: f64 = 1e-4;
pub const PERMUTATION_TOL: f64 = 1e-6;
/// Per-dataset budget for the table suite.
pub const DATASET_SECONDS: f64 = 45.0 * 60.0;
pub const PARTITION_MIN_GRAPHS: usize = 3000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub criterion: u8,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(criterion: u8, id: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { id: id.into(), criterion, pass, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{} [{}] {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.criterion, self.id, self.detail)
    }
}

fn failed(criterion: u8, id: &str, e: impl std::fmt::Display) -> Check {
    Check::new(criterion, id, false, format!("error: {e}"))
}

// ---- exact oracle ----

pub fn exact_oracle_checks() -> Vec<Check> {
    let mut out = Vec::new();
    out.push(match EnvParams::binary(0.25, 0.15).and_then(|e| swap_augmentation(&e)) {
        Ok(v) => {
            let err = (v.alpha - 0.5).abs().max((v.beta - 0.15).abs());
            Check::new(1, "swap_augmentation", err <= EXACT_TOL, format!("(0.25, 0.15) -> ({}, {}), err {err:.1e}", v.alpha, v.beta))
        }
        Err(e) => failed(1, "swap_augmentation", e),
    });

    let twin = || -> gala_core::Result<(f64, f64, Option<Slot>)> {
        let set = EnvironmentSet::uniform(vec![EnvParams::binary(0.2, 0.1)?, EnvParams::binary(0.2, 0.3)?])?;
        let twin = construct_twin(&set)?;
        let target = exact_joint(&EnvParams::binary(0.2, 0.2)?);
        Ok((
            twin.mixture_table().max_abs_diff(&target),
            set.mixture_table().max_abs_diff(&target),
            gala_core::oracle::invariant_slot(&twin),
        ))
    };
    out.push(match twin() {
        Ok((dt, ds, slot)) => Check::new(
            1,
            "twin_indistinguishable",
            dt <= EXACT_TOL && ds <= EXACT_TOL && slot == Some(Slot::Spurious),
            format!("twin vs joint(0.2,0.2) {dt:.1e}, original {ds:.1e}, twin invariant slot {slot:?}"),
        ),
        Err(e) => failed(1, "twin_indistinguishable", e),
    });

    let grid = square_grid(&linspace(0.4, 0.95, 9));
    out.push(match identifiability_scan(&grid, 3) {
        Ok(r) => {
            let off = r.count(|p| (p.a - p.b).abs() > EXACT_TOL);
            let gala_wins = r.count(|p| (p.a - p.b).abs() > EXACT_TOL && p.gala.winner == Winner::Invariant);
            let spurious_region = r.count(|p| p.b > p.a + EXACT_TOL);
            let ciga_spurious = r.count(|p| p.b > p.a + EXACT_TOL && p.ciga.winner == Winner::Spurious);
            let diag = r.count(|p| (p.a - p.b).abs() <= EXACT_TOL);
            let ties = r.count(|p| (p.a - p.b).abs() <= EXACT_TOL && p.gala.winner == Winner::Tie && p.ciga.winner == Winner::Tie);
            let v = r.violations();
            Check::new(
                1,
                "identifiability_scan",
                v.is_empty() && r.points.len() == 81,
                format!(
                    "gala invariant wins {gala_wins}/{off} off-diagonal, ciga spurious wins {ciga_spurious}/{spurious_region} where b > a, ties {ties}/{diag} on the diagonal, {} violations",
                    v.len()
                ),
            )
        }
        Err(e) => failed(1, "identifiability_scan", e),
    });
    out
}

// ---- numerical hygiene ----

fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).mapv(f64::abs).fold(0.0f64, |m, &x| m.max(x))
}

fn objective(params: &ModelParams, batch: &GraphBatch, contrast: bool, grads: bool) -> (f64, Option<Vec<Array2<f64>>>) {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut pass = Pass::train(None);
    let (logits, emb) = if contrast {
        let s = featurize_on(&mut tape, &bound, params, batch, &mut pass);
        classify_on(&mut tape, &bound, params, batch, Some(s), &mut pass)
    } else {
        classify_on(&mut tape, &bound, params, batch, None, &mut pass)
    };
    let mut total = tape.cross_entropy(logits, batch.labels.clone());
    if contrast {
        let c = contrastive_on(&mut tape, emb, &sample_pairs_ciga(&batch.labels), &ContrastConfig::default());
        let c = tape.scale(c, 2.0);
        total = tape.add(total, c);
    }
    let value = tape.scalar(total);
    (value, grads.then(|| bound.grads(&tape.backward(total), params)))
}

/// Worst relative error of central differences at a few weights.
fn gradient_error(contrast: bool, seed: u64) -> gala_train::Result<f64> {
    let split = build_splits(0.8, 0.6, 3, 11)?;
    let batch = GraphBatch::from_graphs(&split.train[..5])?;
    let params = ModelParams::init(ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed))?;
    let g = objective(&params, &batch, contrast, true).1.expect("grads");
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let (mut worst, mut checked, mut attempts) = (0.0f64, 0, 0);
    while checked < 6 && attempts < 10_000 {
        attempts += 1;
        let t = rng.gen_range(0..params.tensors.len());
        let flat = rng.gen_range(0..params.tensors[t].len());
        let (r, c) = (flat / params.tensors[t].ncols(), flat % params.tensors[t].ncols());
        let analytic = g[t][[r, c]];
        if analytic.abs() < 1e-5 {
            continue;
        }
        let h = 1e-6;
        let (mut plus, mut minus) = (params.clone(), params.clone());
        plus.tensors[t][[r, c]] += h;
        minus.tensors[t][[r, c]] -= h;
        let numeric = (objective(&plus, &batch, contrast, false).0 - objective(&minus, &batch, contrast, false).0) / (2.0 * h);
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()));
        checked += 1;
    }
    if checked == 0 {
        return Err(gala_train::TrainError::Config("no weight with a usable gradient".into()));
    }
    Ok(worst)
}

fn permutation_error() -> gala_train::Result<f64> {
    let split = build_splits(0.8, 0.6, 2, 5)?;
    let params = ModelParams::init(ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(2))?;
    let mut worst = 0.0f64;
    for g in split.train.iter().take(4) {
        let n = g.num_nodes;
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..n).collect();
            p.reverse();
            p.rotate_left(n / 3);
            p
        };
        let mut h = g.clone();
        h.edges = g.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        for (i, f) in g.node_features.iter().enumerate() {
            h.node_features[perm[i]] = f.clone();
        }
        let (_, a) = encode(&GraphBatch::from_graphs([g])?, &params, None)?;
        let (_, b) = encode(&GraphBatch::from_graphs([&h])?, &params, None)?;
        worst = worst.max(max_abs(&a, &b));
    }
    Ok(worst)
}

/// Closed-form and structural identities of the contrastive loss.
fn contrastive_identities() -> gala_train::Result<(f64, bool)> {
    let m = 5;
    let zeros = Array2::<f64>::zeros((m + 2, 3));
    let single = PairAssignment {
        pairs: Pairs { anchors: vec![0], positives: vec![vec![1]], negatives: vec![(2..m + 2).collect()] },
        ..Default::default()
    };
    let dot = ContrastConfig { similarity: Similarity::Dot, ..Default::default() };
    let baseline = (contrastive_loss(&zeros, &single, &dot)? - (1.0 + m as f64).ln()).abs();
    let labels: Vec<usize> = (0..24).map(|i| (i * 5) % 3).collect();
    let tags: Vec<CellTag> = (0..24).map(|i| CellTag { correct: i % 4 == 0, proxy: i % 3 }).collect();
    let open = GalaSampling { one_side: false, cross_partition: false, match_negative_proxy: false };
    let same = sample_pairs_gala(&labels, &tags, open) == sample_pairs_ciga(&labels);
    Ok((baseline, same))
}

fn scm_error() -> gala_core::Result<f64> {
    let mut worst = 0.0f64;
    for &(a, b) in &[(0.7, 0.9), (0.8, 0.6), (0.4, 0.95), (1.0, 0.34)] {
        let t = exact_joint(&EnvParams::from_strengths(a, b, 3)?);
        let (inv, spu) = marginal_strengths(&t);
        worst = worst.max((t.total() - 1.0).abs()).max((inv - a).abs()).max((spu - b).abs());
        worst = worst.max(t.swap_roles().max_abs_diff(&exact_joint(&EnvParams::from_strengths(b, a, 3)?)));
    }
    let set = EnvironmentSet::uniform(vec![EnvParams::binary(0.2, 0.1)?, EnvParams::binary(0.2, 0.3)?])?;
    let mixed = mix_environments(&set)?;
    worst = worst.max(set.mixture_table().max_abs_diff(&exact_joint(&mixed)));
    Ok(worst)
}

fn round_trip() -> gala_core::Result<bool> {
    let split = build_splits(0.7, 0.9, 20, 3)?;
    let mut buf = Vec::new();
    write_dataset(&split, &mut buf)?;
    let back = read_dataset(&buf[..])?;
    Ok(back == split)
}

pub fn hygiene_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let grad = (|| -> gala_train::Result<f64> {
        Ok(gradient_error(false, 1)?.max(gradient_error(true, 2)?).max(gradient_error(true, 3)?))
    })();
    out.push(match grad {
        Ok(e) => Check::new(5, "gradient_finite_differences", e <= GRADIENT_REL_TOL, format!("worst relative error {e:.2e} (tol {GRADIENT_REL_TOL:.0e})")),
        Err(e) => failed(5, "gradient_finite_differences", e),
    });
    out.push(match permutation_error() {
        Ok(e) => Check::new(5, "permutation_invariance", e <= PERMUTATION_TOL, format!("max embedding change {e:.2e} (tol {PERMUTATION_TOL:.0e})")),
        Err(e) => failed(5, "permutation_invariance", e),
    });
    out.push(match contrastive_identities() {
        Ok((base, same)) => Check::new(
            5,
            "contrastive_identities",
            base <= EXACT_TOL && same,
            format!("zero-embedding loss vs ln(1+M) {base:.1e}, unconstrained gala pairs equal ciga pairs: {same}"),
        ),
        Err(e) => failed(5, "contrastive_identities", e),
    });
    out.push(match scm_error() {
        Ok(e) => Check::new(5, "scm_exact", e <= EXACT_TOL, format!("max deviation {e:.1e} (tol {EXACT_TOL:.0e})")),
        Err(e) => failed(5, "scm_exact", e),
    });
    out.push(match round_trip() {
        Ok(ok) => Check::new(5, "dataset_round_trip", ok, format!("write/read reproduces the split: {ok}")),
        Err(e) => failed(5, "dataset_round_trip", e),
    });
    out
}

// ---- suite-backed checks ----

pub const TABLE_DATASETS: [(f64, f64); 4] = [(0.7, 0.9), (0.8, 0.9), (0.8, 0.6), (0.8, 0.7)];
pub const ACCEPTANCE_SEEDS: [u64; 3] = [1, 2, 3];

pub fn table_spec() -> ExperimentSpec {
    ExperimentSpec {
        name: "acceptance-table".into(),
        datasets: TABLE_DATASETS.iter().map(|&(a, b)| Dataset::new(a, b)).collect(),
        methods: vec![Method::Gala, Method::Erm, Method::CigaContrast, Method::OracleGroundtruth],
        seeds: ACCEPTANCE_SEEDS.to_vec(),
        ..Default::default()
    }
}

pub fn sensitivity_spec() -> ExperimentSpec {
    let mut penalty = PENALTY_GRID.to_vec();
    penalty.push(0.0);
    ExperimentSpec {
        name: "acceptance-sensitivity".into(),
        datasets: vec![Dataset::new(0.7, 0.9)],
        methods: vec![Method::Gala],
        seeds: ACCEPTANCE_SEEDS.to_vec(),
        train: TrainSettings { auto_upsample: false, upsample_k: 4, ..Default::default() },
        sweeps: Sweeps { penalty, upsample: vec![1] },
        ..Default::default()
    }
}

fn pts(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn mean_of(report: &SuiteReport, method: Method, d: Dataset) -> Option<f64> {
    report.default_row(method, d).and_then(|r| r.mean_accuracy)
}

pub fn table_trend_checks(report: &SuiteReport) -> Vec<Check> {
    let mut out = Vec::new();
    let ds = |a, b| Dataset::new(a, b);
    let accs = |d: Dataset| {
        Some((
            mean_of(report, Method::Gala, d)?,
            mean_of(report, Method::Erm, d)?,
            mean_of(report, Method::CigaContrast, d)?,
            mean_of(report, Method::OracleGroundtruth, d)?,
        ))
    };
    let missing = |id: &str| Check::new(2, id, false, "missing or failed cells");

    let d = ds(0.7, 0.9);
    out.push(match accs(d) {
        Some((g, e, c, _)) => Check::new(
            2,
            "table {0.7,0.9}",
            g >= 0.62 && g - e >= 0.08 && g - c >= 0.08,
            format!("gala {} (need >= 62.0), erm {}, ciga {}", pts(g), pts(e), pts(c)),
        ),
        None => missing("table {0.7,0.9}"),
    });
    let d = ds(0.8, 0.9);
    out.push(match accs(d) {
        Some((g, _, c, _)) => Check::new(
            2,
            "table {0.8,0.9}",
            g >= 0.65 && g - c >= 0.08,
            format!("gala {} (need >= 65.0), ciga {}", pts(g), pts(c)),
        ),
        None => missing("table {0.8,0.9}"),
    });
    for (a, b) in [(0.8, 0.6), (0.8, 0.7)] {
        let id = format!("table {{{a},{b}}}");
        out.push(match accs(ds(a, b)) {
            Some((g, _, c, o)) => Check::new(
                2,
                &id,
                (g - c).abs() <= 0.03 && (o - g).abs() <= 0.06,
                format!("gala {}, ciga {} (within 3), oracle {} (within 6)", pts(g), pts(c), pts(o)),
            ),
            None => missing(&id),
        });
    }
    let slowest = report
        .spec
        .datasets
        .iter()
        .map(|&d| (d, report.dataset_seconds(d)))
        .fold((Dataset::new(0.0, 0.0), 0.0f64), |m, x| if x.1 > m.1 { x } else { m });
    out.push(Check::new(
        2,
        "table runtime",
        slowest.1 <= DATASET_SECONDS,
        format!("slowest dataset {} took {:.1} min of compute (limit 45)", slowest.0.label(), slowest.1 / 60.0),
    ));
    out
}

/// Uses the assistant of the first seed.
pub fn partition_checks(report: &SuiteReport) -> Vec<Check> {
    let d = Dataset::new(0.7, 0.9);
    let seed = report.spec.seeds[0];
    let rec = report.assistants.iter().find(|r| r.dataset == d && r.seed == seed);
    let check = match rec.and_then(|r| r.curves) {
        Some(c) => {
            let n = c.positive.graphs + c.negative.graphs;
            let (s, i) = (c.spurious_gap(), c.invariant_gap());
            Check::new(
                3,
                "assistant partition {0.7,0.9}",
                s >= 0.9 && i <= 0.05 && n >= PARTITION_MIN_GRAPHS,
                format!("spurious gap {s:.3} (need >= 0.9), invariant gap {i:.3} (need <= 0.05), n {n}"),
            )
        }
        None => Check::new(3, "assistant partition {0.7,0.9}", false, "no assistant partition for the first seed"),
    };
    vec![check]
}

pub fn sensitivity_checks(report: &SuiteReport) -> Vec<Check> {
    let d = Dataset::new(0.7, 0.9);
    let k = report.spec.train.default_k();
    let lambda = report.spec.train.penalty_weight;
    let sweep: Vec<(f64, f64)> = PENALTY_GRID
        .iter()
        .filter_map(|&l| Some((l, report.row(Method::Gala, d, l, k)?.mean_accuracy?)))
        .collect();
    let mut out = Vec::new();
    if sweep.len() != PENALTY_GRID.len() {
        out.push(Check::new(4, "penalty sweep spread", false, "missing sweep cells"));
        return out;
    }
    let hi = sweep.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = sweep.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let listing: Vec<String> = sweep.iter().map(|(l, a)| format!("{l}:{}", pts(*a))).collect();
    out.push(Check::new(
        4,
        "penalty sweep spread",
        hi - lo <= 0.12,
        format!("max - min {} pts (limit 12) over [{}]", pts(hi - lo), listing.join(", ")),
    ));
    for (id, l, kk) in [("no contrast degrades", 0.0, k), ("no upsampling degrades", lambda, 1)] {
        out.push(match report.row(Method::Gala, d, l, kk).and_then(|r| r.mean_accuracy) {
            Some(acc) => Check::new(
                4,
                id,
                hi - acc >= 0.10,
                format!("lambda {l}, k {kk}: {} vs best sweep {} (need 10 pts lower)", pts(acc), pts(hi)),
            ),
            None => Check::new(4, id, false, "missing cell"),
        });
    }
    out
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_and_hygiene_checks_pass() {
        let checks: Vec<Check> = exact_oracle_checks().into_iter().chain(hygiene_checks()).collect();
        for c in &checks {
            assert!(c.pass, "{}", c.line());
        }
    }

    #[test]
    fn acceptance_specs_validate() {
        assert!(table_spec().validate().is_ok());
        let s = sensitivity_spec();
        assert!(s.validate().is_ok());
        assert_eq!(s.gala_points().len(), 9);
    }
}
