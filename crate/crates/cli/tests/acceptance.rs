//! One test per acceptance criterion. Each prints a PASS/FAIL line with the
//! measured values, their pinned bounds and the runtime against its budget.
//! Run with `cargo test -p kolmocouple-cli --test acceptance -- --nocapture --test-threads 1`.

use std::path::PathBuf;
use std::sync::Mutex;

use kolmocouple_cli::suite::{find, run_criterion, summary_line, CriterionOutcome};

const SEED: u64 = 0;

// Runtime budgets assume the machine is not shared with other criteria.
static SERIAL: Mutex<()> = Mutex::new(());

fn run(id: &str) -> CriterionOutcome {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let out = tempfile::tempdir().unwrap();
    let (outcome, secs) = run_criterion(find(id).unwrap(), SEED, &PathBuf::from(out.path()));
    println!("{}", summary_line(&outcome, secs));
    for c in &outcome.checks {
        println!(
            "    {} {} = {:.9e} ({})",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.bound
        );
    }
    if let Some(note) = &outcome.note {
        println!("    note: {note}");
    }
    outcome
}

fn assert_passed(o: &CriterionOutcome) {
    let failed: Vec<_> = o.checks.iter().filter(|c| !c.passed).collect();
    assert!(
        o.passed,
        "criterion {} failed: {failed:?} {:?}",
        o.id, o.note
    );
}

#[test]
fn criterion_01_doubling_identity() {
    assert_passed(&run("1"));
}

#[test]
fn criterion_02_psd_of_doubled_diffusion() {
    assert_passed(&run("2"));
}

#[test]
fn criterion_03_power_law_non_uniqueness() {
    assert_passed(&run("3"));
}

#[test]
fn criterion_04_ou_contraction() {
    assert_passed(&run("4"));
}

#[test]
fn criterion_05_product_gaussian_counterexample() {
    assert_passed(&run("5"));
}

#[test]
fn criterion_06_tanh_dichotomy() {
    assert_passed(&run("6"));
}

#[test]
fn criterion_07_isotropic_margin() {
    assert_passed(&run("7"));
}

#[test]
fn criterion_08_mollification_identity() {
    assert_passed(&run("8"));
}

#[test]
fn criterion_09_solver_cross_check() {
    assert_passed(&run("9"));
}

#[test]
fn criterion_10_determinism() {
    assert_passed(&run("10"));
}
