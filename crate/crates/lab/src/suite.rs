//! Runs every (dataset, method, seed, sweep point) cell of an experiment and
//! aggregates the results.

use std::collections::BTreeMap;
use std::time::Instant;

use gala_core::synth::{build_splits, DatasetSplit};
use gala_train::assistant::{auto_upsample_factor, Partition};
use gala_train::trainer::{build_partition, run_with_partition, Method, RunResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{cooccurrence_curves, featurizer_f1, CooccurrenceCurves};
use crate::spec::{Dataset, ExperimentSpec, AUTO_K};
use crate::{LabError, Result};

/// Environment variable holding the number of concurrent cells.
pub const WORKERS_ENV: &str = "GALA_WORKERS";

pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()).filter(|&n| n >= 1).unwrap_or(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub dataset: Dataset,
    pub method: Method,
    pub seed: u64,
    pub penalty_weight: f64,
    /// [`AUTO_K`] when the factor comes from the partition.
    pub upsample_k: usize,
}

type GroupKey = (&'static str, u64, u64, u64, usize);

impl CellKey {
    /// Everything but the seed.
    fn group(&self) -> GroupKey {
        let d = self.dataset;
        (self.method.name(), d.a.to_bits(), d.b.to_bits(), self.penalty_weight.to_bits(), self.upsample_k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub selected_epoch: Option<usize>,
    pub epochs_run: usize,
    pub upsample_k_used: usize,
    /// Top-k recovery of the invariant edges on the test graphs.
    pub identification_f1: Option<f64>,
    pub negative_fraction: Option<f64>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub key: CellKey,
    pub metrics: Option<CellMetrics>,
    pub error: Option<String>,
}

/// The assistant partition shared by all GALA cells of a (dataset, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistantRecord {
    pub dataset: Dataset,
    pub seed: u64,
    pub curves: Option<CooccurrenceCurves>,
    pub negative_fraction: Option<f64>,
    pub wall_clock_secs: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub dataset: Dataset,
    pub penalty_weight: f64,
    pub upsample_k: usize,
    pub mean_accuracy: Option<f64>,
    /// Sample standard deviation; `None` with fewer than two seeds.
    pub std_accuracy: Option<f64>,
    pub seeds: usize,
    pub failed: usize,
    pub identification_f1: Option<f64>,
    pub negative_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub spec: ExperimentSpec,
    pub workers: usize,
    pub assistants: Vec<AssistantRecord>,
    pub cells: Vec<Cell>,
    pub rows: Vec<ReportRow>,
}

impl SuiteReport {
    pub fn row(&self, method: Method, dataset: Dataset, penalty_weight: f64, upsample_k: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.method == method && r.dataset == dataset && r.penalty_weight == penalty_weight && r.upsample_k == upsample_k
        })
    }

    /// The row of `method` at the spec's default penalty and upsampling.
    pub fn default_row(&self, method: Method, dataset: Dataset) -> Option<&ReportRow> {
        let (l, k) = default_point(&self.spec, method);
        self.row(method, dataset, l, k)
    }

    /// Summed cell and assistant time spent on one dataset.
    pub fn dataset_seconds(&self, dataset: Dataset) -> f64 {
        let cells: f64 =
            self.cells.iter().filter(|c| c.key.dataset == dataset).filter_map(|c| c.metrics.as_ref()).map(|m| m.wall_clock_secs).sum();
        let assist: f64 = self.assistants.iter().filter(|a| a.dataset == dataset).map(|a| a.wall_clock_secs).sum();
        cells + assist
    }

    pub fn failures(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.error.is_some())
    }
}

fn default_point(spec: &ExperimentSpec, method: Method) -> (f64, usize) {
    match method {
        Method::Gala => (spec.train.penalty_weight, spec.train.default_k()),
        Method::CigaContrast => (spec.train.penalty_weight, 1),
        _ => (0.0, 1),
    }
}

/// Cells in execution order: dataset, then method, then sweep point, then seed.
pub fn plan(spec: &ExperimentSpec) -> Vec<CellKey> {
    let mut out = Vec::new();
    for &dataset in &spec.datasets {
        for &method in &spec.methods {
            let points = if method == Method::Gala { spec.gala_points() } else { vec![default_point(spec, method)] };
            for (penalty_weight, upsample_k) in points {
                for &seed in &spec.seeds {
                    out.push(CellKey { dataset, method, seed, penalty_weight, upsample_k });
                }
            }
        }
    }
    out
}

fn run_cell(key: &CellKey, split: &DatasetSplit, spec: &ExperimentSpec, partition: Option<&Partition>) -> Result<CellMetrics> {
    let k = match (key.upsample_k, partition) {
        (AUTO_K, Some(p)) => auto_upsample_factor(p),
        (AUTO_K, None) => 1,
        (k, _) => k,
    };
    let config = spec.train.config(key.method, key.seed, key.penalty_weight, k);
    let r: RunResult = run_with_partition(split, &config, partition)?;
    let identification_f1 = match key.method {
        Method::Gala | Method::CigaContrast | Method::ErmInterpretable => Some(featurizer_f1(&r.params, &split.test)?),
        _ => None,
    };
    Ok(CellMetrics {
        test_accuracy: r.test_accuracy,
        val_accuracy: r.val_accuracy,
        selected_epoch: r.selected_epoch,
        epochs_run: r.epochs.len(),
        upsample_k_used: k,
        identification_f1,
        negative_fraction: r.partition.map(|p| p.negative_fraction),
        wall_clock_secs: r.wall_clock_secs,
    })
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// Averages cells over seeds, keeping first-appearance order.
pub fn aggregate(cells: &[Cell]) -> Vec<ReportRow> {
    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: BTreeMap<GroupKey, Vec<&Cell>> = BTreeMap::new();
    for c in cells {
        let key = c.key.group();
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(c);
    }
    order
        .into_iter()
        .map(|k| {
            let members = &groups[&k];
            let ok: Vec<&CellMetrics> = members.iter().filter_map(|c| c.metrics.as_ref()).collect();
            let acc: Vec<f64> = ok.iter().map(|m| m.test_accuracy).collect();
            let f1: Vec<f64> = ok.iter().filter_map(|m| m.identification_f1).collect();
            let nf: Vec<f64> = ok.iter().filter_map(|m| m.negative_fraction).collect();
            let first = members[0].key;
            ReportRow {
                method: first.method,
                dataset: first.dataset,
                penalty_weight: first.penalty_weight,
                upsample_k: first.upsample_k,
                mean_accuracy: mean(&acc),
                std_accuracy: sample_std(&acc),
                seeds: acc.len(),
                failed: members.len() - ok.len(),
                identification_f1: mean(&f1),
                negative_fraction: mean(&nf),
            }
        })
        .collect()
}

/// Runs the suite with a no-op progress hook.
pub fn run_suite(spec: &ExperimentSpec, workers: usize) -> Result<SuiteReport> {
    run_suite_with(spec, workers, |_| {})
}

/// Runs every cell, calling `progress` as each one finishes. Failed cells
/// are recorded and the suite carries on.
pub fn run_suite_with(spec: &ExperimentSpec, workers: usize, progress: impl Fn(&Cell) + Sync) -> Result<SuiteReport> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::Spec(format!("worker pool: {e}")))?;
    let splits: Vec<DatasetSplit> = spec
        .datasets
        .iter()
        .map(|d| build_splits(d.a, d.b, spec.per_class, spec.data_seed))
        .collect::<std::result::Result<_, _>>()?;
    let split_of = |d: &Dataset| spec.datasets.iter().position(|x| x == d).expect("planned dataset");

    let wants_gala = spec.methods.contains(&Method::Gala);
    let jobs: Vec<(usize, u64)> = if wants_gala {
        (0..spec.datasets.len()).flat_map(|d| spec.seeds.iter().map(move |&s| (d, s))).collect()
    } else {
        Vec::new()
    };
    let partitions: Vec<(AssistantRecord, Option<Partition>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, seed)| {
                let started = Instant::now();
                let cfg = spec.train.config(Method::Gala, seed, spec.train.penalty_weight, spec.train.upsample_k);
                let res = build_partition(&splits[d], &cfg);
                let secs = started.elapsed().as_secs_f64();
                let dataset = spec.datasets[d];
                match res {
                    Ok(p) => {
                        let curves = cooccurrence_curves(&p, &splits[d].train);
                        let rec = AssistantRecord {
                            dataset,
                            seed,
                            curves: Some(curves),
                            negative_fraction: Some(p.negative_fraction()),
                            wall_clock_secs: secs,
                            error: None,
                        };
                        (rec, Some(p))
                    }
                    Err(e) => {
                        let rec = AssistantRecord {
                            dataset,
                            seed,
                            curves: None,
                            negative_fraction: None,
                            wall_clock_secs: secs,
                            error: Some(e.to_string()),
                        };
                        (rec, None)
                    }
                }
            })
            .collect()
    });
    let partition_for = |d: usize, seed: u64| -> std::result::Result<&Partition, String> {
        let i = jobs.iter().position(|&j| j == (d, seed)).expect("assistant job");
        partitions[i].1.as_ref().ok_or_else(|| format!("assistant failed: {}", partitions[i].0.error.as_deref().unwrap_or("")))
    };

    let keys = plan(spec);
    let cells: Vec<Cell> = pool.install(|| {
        keys.par_iter()
            .map(|key| {
                let d = split_of(&key.dataset);
                let outcome = if key.method == Method::Gala {
                    partition_for(d, key.seed).and_then(|p| run_cell(key, &splits[d], spec, Some(p)).map_err(|e| e.to_string()))
                } else {
                    run_cell(key, &splits[d], spec, None).map_err(|e| e.to_string())
                };
                let cell = match outcome {
                    Ok(m) => Cell { key: *key, metrics: Some(m), error: None },
                    Err(e) => Cell { key: *key, metrics: None, error: Some(e) },
                };
                progress(&cell);
                cell
            })
            .collect()
    });
    let rows = aggregate(&cells);
    Ok(SuiteReport {
        spec: spec.clone(),
        workers,
        assistants: partitions.into_iter().map(|p| p.0).collect(),
        cells,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::Sweeps;

    fn key(method: Method, seed: u64) -> CellKey {
        CellKey { dataset: Dataset::new(0.8, 0.6), method, seed, penalty_weight: 0.0, upsample_k: 1 }
    }

    fn ok(acc: f64) -> Option<CellMetrics> {
        Some(CellMetrics {
            test_accuracy: acc,
            val_accuracy: acc,
            selected_epoch: Some(0),
            epochs_run: 1,
            upsample_k_used: 1,
            identification_f1: None,
            negative_fraction: None,
            wall_clock_secs: 0.0,
        })
    }

    #[test]
    fn aggregation() {
        let cells = vec![
            Cell { key: key(Method::Erm, 1), metrics: ok(0.5), error: None },
            Cell { key: key(Method::Erm, 2), metrics: ok(0.7), error: None },
            Cell { key: key(Method::Erm, 3), metrics: None, error: Some("boom".into()) },
            Cell { key: key(Method::OracleGroundtruth, 1), metrics: ok(0.9), error: None },
        ];
        let rows = aggregate(&cells);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, Method::Erm);
        assert!((rows[0].mean_accuracy.unwrap() - 0.6).abs() < 1e-12);
        assert!((rows[0].std_accuracy.unwrap() - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!((rows[0].seeds, rows[0].failed), (2, 1));
        assert_eq!(rows[1].std_accuracy, None);
    }

    #[test]
    fn plan_covers_sweeps_once() {
        let spec = ExperimentSpec {
            methods: vec![Method::Gala, Method::Erm],
            seeds: vec![1, 2],
            sweeps: Sweeps { penalty: vec![0.0, 4.0], upsample: vec![1] },
            ..Default::default()
        };
        let p = plan(&spec);
        // gala at (4,auto), (0,auto), (4,1) plus erm, two seeds each
        assert_eq!(p.len(), 8);
        assert!(p.iter().filter(|k| k.method == Method::Erm).all(|k| k.penalty_weight == 0.0));
    }
}
