//! Acceptance run: one PASS/FAIL line per check.
//!
//! Checks listed in `KNOWN_FAILURES` do not reach the threshold at desk
//! scale. They still print FAIL but do not fail the target; any other
//! failure exits nonzero. `gala suite --acceptance` fails on every FAIL.
//!
//! Trains the full table and sensitivity suites, which takes over an hour on
//! one core. Set `GALA_ACCEPTANCE_QUICK=1` to run only the exact-oracle and
//! hygiene checks.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use gala_lab::acceptance::{self, Check};
use gala_lab::report::write_artifacts;
use gala_lab::suite::{run_suite, workers_from_env};

const KNOWN_FAILURES: [&str; 1] = ["penalty sweep spread"];

fn main() -> ExitCode {
    let started = Instant::now();
    let mut checks: Vec<Check> = acceptance::exact_oracle_checks();
    let hygiene_start = Instant::now();
    checks.extend(acceptance::hygiene_checks());
    let hygiene_secs = hygiene_start.elapsed().as_secs_f64();
    checks.push(Check {
        id: "hygiene runtime".into(),
        criterion: 5,
        pass: hygiene_secs <= 120.0,
        detail: format!("{hygiene_secs:.1}s (limit 120)"),
    });

    let quick = std::env::var("GALA_ACCEPTANCE_QUICK").is_ok_and(|v| v == "1");
    if !quick {
        let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        let workers = workers_from_env();
        let mut suite = |spec: gala_lab::spec::ExperimentSpec, dir: &str| match run_suite(&spec, workers) {
            Ok(r) => {
                if let Err(e) = write_artifacts(&r, &out.join(dir)) {
                    eprintln!("could not write {dir} artifacts: {e}");
                }
                Some(r)
            }
            Err(e) => {
                checks.push(Check { id: format!("{dir} suite"), criterion: 0, pass: false, detail: e.to_string() });
                None
            }
        };
        let table = suite(acceptance::table_spec(), "table");
        let sens = suite(acceptance::sensitivity_spec(), "sensitivity");
        if let Some(t) = &table {
            checks.extend(acceptance::table_trend_checks(t));
            checks.extend(acceptance::partition_checks(t));
        }
        if let Some(s) = &sens {
            checks.extend(acceptance::sensitivity_checks(s));
        }
        eprintln!("artifacts in {}", out.display());
    } else {
        println!("SKIP [2,3,4] suite-backed checks (GALA_ACCEPTANCE_QUICK=1)");
    }

    let known = |c: &Check| KNOWN_FAILURES.contains(&c.id.as_str());
    for c in &checks {
        if !c.pass && known(c) {
            println!("{} (known desk-scale shortfall)", c.line());
        } else {
            println!("{}", c.line());
        }
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    println!("acceptance: {passed}/{} checks passed in {:.0}s", checks.len(), started.elapsed().as_secs_f64());
    if checks.iter().all(|c| c.pass || known(c)) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
