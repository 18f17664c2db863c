//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are never captured.

use std::process::ExitCode;
use std::time::Duration;

use delayed_mdp::checks::{self, run_suite};

fn pinned_tolerances() -> Vec<&'static str> {
    let mut wrong = Vec::new();
    let mut pin = |name, ok: bool| {
        if !ok {
            wrong.push(name);
        }
    };
    pin("OCCUPANCY_TOL", checks::OCCUPANCY_TOL == 1e-6);
    pin("KL_SLACK", checks::KL_SLACK == 1e-9);
    pin("KL_MIN_UPDATES", checks::KL_MIN_UPDATES == 10_000);
    pin("COVERAGE_MIN", checks::COVERAGE_MIN == 0.9);
    pin("UOB_SAMPLE_SLACK", checks::UOB_SAMPLE_SLACK == 1e-9);
    pin("UOB_GRID_TOL", checks::UOB_GRID_TOL == 1e-3);
    pin("EXP3_TOL", checks::EXP3_TOL == 1e-9);
    pin("REGRET_RATIO_MAX", checks::REGRET_RATIO_MAX == 0.5);
    pin("DELAY_SLOPE_MAX", checks::DELAY_SLOPE_MAX == 0.75);
    pin("KKT_TOL", checks::KKT_TOL == 1e-6);
    pin("REDUCTION_TIME_LIMIT", checks::REDUCTION_TIME_LIMIT == Duration::from_secs(30));
    pin("VALIDITY_TIME_LIMIT", checks::VALIDITY_TIME_LIMIT == Duration::from_secs(300));
    pin("REGRET_TIME_LIMIT", checks::REGRET_TIME_LIMIT == Duration::from_secs(300));
    wrong
}

fn main() -> ExitCode {
    let wrong = pinned_tolerances();
    if !wrong.is_empty() {
        println!("tolerances changed: {wrong:?}");
        return ExitCode::FAILURE;
    }
    let results = run_suite("all").expect("suites run");
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 && results.len() == 11 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
