//! Acceptance criteria 1-11, each as its own test.
//!
//! Every test prints one `criterion N (id): PASS|FAIL` line followed by the
//! measured values, so `cargo test --test acceptance -- --nocapture` doubles
//! as a report.

use std::process::Command;

use sudest_cli::verify::{self, CheckResult, VerifyOptions};

fn report(result: &CheckResult) {
    println!(
        "criterion {} ({}): {}  [{:.2}s]",
        result.criterion,
        result.id,
        if result.passed { "PASS" } else { "FAIL" },
        result.seconds
    );
    for a in &result.assertions {
        println!(
            "    {} {} = {:e} in [{:e}, {:e}]",
            if a.passed() { "ok " } else { "BAD" },
            a.label,
            a.value,
            a.lo,
            a.hi
        );
    }
    for note in &result.notes {
        println!("    note: {note}");
    }
    if let Some(e) = &result.error {
        println!("    error: {e}");
    }
}

fn criterion(id: &str) {
    let options = VerifyOptions {
        seed: verify::DEFAULT_SEED,
        perturb: Vec::new(),
    };
    let result = verify::run_check(id, &options).expect("known check id");
    report(&result);
    assert!(result.passed, "criterion {} ({id}) failed", result.criterion);
}

#[test]
fn criterion_01_optimal_qfi() {
    criterion("optimal_qfi");
}

#[test]
fn criterion_02_bound_and_attainment() {
    criterion("bound");
}

#[test]
fn criterion_03_strict_suboptimality() {
    criterion("strictness");
}

#[test]
fn criterion_04_dense_oracle() {
    criterion("dense_oracle");
}

#[test]
fn criterion_05_mse_scaling() {
    criterion("mse_scaling");
}

#[test]
fn criterion_06_separable_baseline() {
    criterion("separable");
}

#[test]
fn criterion_07_random_measurement() {
    criterion("random_measurement");
}

#[test]
fn criterion_08_locc() {
    criterion("locc");
}

#[test]
fn criterion_09_approximate_designs() {
    criterion("approx_design");
}

#[test]
fn criterion_10_injectivity() {
    criterion("injectivity");
}

fn run_to(dir: &std::path::Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_sudest"))
        .args(["--seed", "424242", "--out-dir"])
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

#[test]
fn criterion_11_determinism() {
    criterion("determinism");

    // The same seed through the binary, with different thread counts, gives
    // byte-identical tables and plots.
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(a.path(), "1"), (b.path(), "3")] {
        run_to(dir, &["--threads", threads, "approx", "--repeats", "40"]);
        run_to(
            dir,
            &["--threads", threads, "simulate", "--n", "1,2", "-N", "400", "--trials", "8", "--strategy", "two-step"],
        );
    }
    for file in ["approx.csv", "approx.svg", "simulate.csv", "simulate.svg"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between runs");
    }
    println!("criterion 11 (determinism): binary outputs byte-identical across runs: PASS");
}
