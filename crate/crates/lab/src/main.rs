use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gala_core::io::{load_dataset, serialize_dataset};
use gala_core::synth::build_splits;
use gala_lab::acceptance::{self, Check};
use gala_lab::report::{load_report, render_table, write_artifacts, write_figures};
use gala_lab::spec::ExperimentSpec;
use gala_lab::suite::{run_suite_with, workers_from_env, Cell, SuiteReport};
use gala_lab::{LabError, Result};
use gala_train::checkpoint::{Checkpoint, RngState};
use gala_train::assistant::auto_upsample_factor;
use gala_train::trainer::{build_partition, run_with_partition, Method};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "gala", version, about = "Two-piece graph benchmark: data, training and experiment suites")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a train/val/test split and write it to a file.
    Generate {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long, default_value_t = 1000)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one method on a stored split.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "gala")]
        method: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// TOML experiment file whose `[train]` table sets the schedule.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        penalty: Option<f64>,
        #[arg(long)]
        upsample: Option<usize>,
        /// Where to write the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact oracle and numerical hygiene checks.
    Verify,
    /// Run an experiment suite and write its result files.
    Suite {
        /// TOML experiment file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Run the acceptance table and sensitivity suites and check them.
        #[arg(long)]
        acceptance: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the table of a finished suite and redraw its figures.
    Report {
        #[arg(long, default_value = "results")]
        dir: PathBuf,
    },
}

fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{}", c.line());
    }
    acceptance::all_pass(checks)
}

fn progress(cell: &Cell) {
    let k = &cell.key;
    match (&cell.metrics, &cell.error) {
        (Some(m), _) => eprintln!(
            "{:<20} {} lambda {} k {} seed {}: test {:.4} ({:.0}s)",
            k.method.name(),
            k.dataset.label(),
            k.penalty_weight,
            k.upsample_k,
            k.seed,
            m.test_accuracy,
            m.wall_clock_secs
        ),
        (None, e) => eprintln!("{} {} seed {}: failed: {}", k.method.name(), k.dataset.label(), k.seed, e.as_deref().unwrap_or("")),
    }
}

fn suite(spec: &ExperimentSpec, out: &std::path::Path, workers: usize) -> Result<SuiteReport> {
    let report = run_suite_with(spec, workers, progress)?;
    let files = write_artifacts(&report, out)?;
    print!("{}", render_table(&report.rows));
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(report)
}

fn main_inner() -> Result<bool> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Generate { a, b, per_class, seed, out } => {
            let split = build_splits(a, b, per_class, seed)?;
            serialize_dataset(&split, &out)?;
            println!("wrote {} ({} train, {} val, {} test)", out.display(), split.train.len(), split.val.len(), split.test.len());
            Ok(true)
        }
        Cmd::Train { data, method, seed, config, penalty, upsample, out } => {
            let method = Method::parse(&method).ok_or_else(|| LabError::Spec(format!("unknown method {method}")))?;
            let spec = match config {
                Some(p) => ExperimentSpec::load(p)?,
                None => ExperimentSpec::default(),
            };
            let t = spec.train;
            let split = load_dataset(&data)?;
            let penalty = penalty.unwrap_or(t.penalty_weight);
            let mut cfg = t.config(method, seed, penalty, upsample.unwrap_or(t.upsample_k));
            let partition = match method {
                Method::Gala => Some(build_partition(&split, &cfg)?),
                _ => None,
            };
            if let (Some(p), None, true) = (&partition, upsample, t.auto_upsample) {
                cfg.upsample_k = auto_upsample_factor(p);
            }
            let r = run_with_partition(&split, &cfg, partition.as_ref())?;
            println!(
                "{}",
                serde_json::json!({
                    "method": method.name(),
                    "seed": seed,
                    "selected_epoch": r.selected_epoch,
                    "val_accuracy": r.val_accuracy,
                    "test_accuracy": r.test_accuracy,
                    "epochs": r.epochs.len(),
                    "upsample_k": cfg.upsample_k,
                    "partition": r.partition,
                    "wall_clock_secs": r.wall_clock_secs,
                })
            );
            if let Some(out) = out {
                let meta = serde_json::json!({ "method": method.name(), "config": cfg, "test_accuracy": r.test_accuracy });
                Checkpoint::new(&r.params, RngState::capture(seed, &ChaCha8Rng::seed_from_u64(seed)), meta).save(&out)?;
                eprintln!("wrote {}", out.display());
            }
            Ok(true)
        }
        Cmd::Verify => {
            let checks: Vec<Check> = acceptance::exact_oracle_checks().into_iter().chain(acceptance::hygiene_checks()).collect();
            Ok(print_checks(&checks))
        }
        Cmd::Suite { config, out, acceptance: accept, workers } => {
            let workers = workers.unwrap_or_else(workers_from_env);
            if accept {
                let mut checks = acceptance::exact_oracle_checks();
                checks.extend(acceptance::hygiene_checks());
                let table = suite(&acceptance::table_spec(), &out.join("table"), workers)?;
                checks.extend(acceptance::table_trend_checks(&table));
                checks.extend(acceptance::partition_checks(&table));
                let sens = suite(&acceptance::sensitivity_spec(), &out.join("sensitivity"), workers)?;
                checks.extend(acceptance::sensitivity_checks(&sens));
                std::fs::write(out.join("acceptance.json"), serde_json::to_string_pretty(&checks)?)?;
                return Ok(print_checks(&checks));
            }
            let spec = match config {
                Some(p) => ExperimentSpec::load(p)?,
                None => ExperimentSpec::default(),
            };
            let report = suite(&spec, &out, workers)?;
            let clean = report.failures().next().is_none();
            Ok(clean)
        }
        Cmd::Report { dir } => {
            let report = load_report(&dir)?;
            print!("{}", render_table(&report.rows));
            for f in write_figures(&report, &dir)? {
                eprintln!("wrote {}", f.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
