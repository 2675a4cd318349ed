use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sudest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sudest"))
        .args(args)
        .env_remove("SUDEST_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn csv_records(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader.records().map(Result::unwrap).collect();
    (header, rows)
}

#[test]
fn design_build_mub_d3_is_certified() {
    let out = sudest(&["--seed", "1", "design", "build", "--kind", "mub", "--d", "3"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["bases"].as_array().unwrap().len(), 4);
    assert_eq!(v["vectors"].as_array().unwrap().len(), 12);
    assert_eq!(v["report"]["is_design"], Value::Bool(true));
}

#[test]
fn design_build_roundtrips_through_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sic.json");
    let out = sudest(&["--seed", "1", "design", "build", "--kind", "sic", "--d", "2", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let record: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["version", "config", "seed", "wall_clock_seconds"] {
        assert!(record.get(key).is_some(), "missing {key}");
    }
    let check = sudest(&["--json", "design", "check", "--file", path.to_str().unwrap()]);
    assert_eq!(code(&check), 0);
    assert_eq!(stdout_json(&check)["count"], 4);
}

#[test]
fn computational_basis_is_not_a_design() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("basis.json");
    std::fs::write(&path, "[[[1,0],[0,0]],[[0,0],[1,0]]]").unwrap();
    let out = sudest(&["--json", "design", "check", "--file", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert_eq!(stdout_json(&out)["report"]["is_design"], Value::Bool(false));
}

#[test]
fn sic_in_d5_points_to_approx() {
    let out = sudest(&["design", "build", "--kind", "sic", "--d", "5"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("approx"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(code(&sudest(&["qfi", "--d", "1"])), 2);
    assert_eq!(code(&sudest(&["qfi", "--state", "nonsense"])), 2);
    assert_eq!(code(&sudest(&["verify", "--only", "no_such_check"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(code(&sudest(&["--config", cfg.to_str().unwrap(), "qfi"])), 2);
}

#[test]
fn qfi_of_two_copy_mub_state() {
    let out = sudest(&["--json", "qfi", "--d", "2", "--n", "2", "--state", "mub"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    for (i, row) in v["qfi"].as_array().unwrap().iter().enumerate() {
        for (j, x) in row.as_array().unwrap().iter().enumerate() {
            let want = if i == j { 16.0 / 3.0 } else { 0.0 };
            assert!((x.as_f64().unwrap() - want).abs() < 1e-10);
        }
    }
    assert!((v["tr_inverse"].as_f64().unwrap() - 0.5625).abs() < 1e-10);
    assert!(v["defect"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn product_input_is_worse_than_the_bound() {
    let out = sudest(&["--json", "qfi", "--d", "2", "--n", "2", "--state", "product"]);
    assert_eq!(code(&out), 0);
    // A singular QFI is reported as `null` (infinite Tr H⁻¹).
    match stdout_json(&out)["tr_inverse"].as_f64() {
        None => {}
        Some(t) => assert!(t > 0.5625),
    }
}

#[test]
fn single_copy_sic_in_d3() {
    let out = sudest(&["--json", "qfi", "--d", "3", "--n", "1", "--state", "sic"]);
    let v = stdout_json(&out);
    let h = v["qfi"].as_array().unwrap();
    assert_eq!(h.len(), 8);
    for (i, row) in h.iter().enumerate() {
        let x = row[i].as_f64().unwrap();
        assert!((x - 4.0 / 3.0).abs() < 1e-10, "diagonal {x}");
    }
}

#[test]
fn approx_echoes_m_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = sudest(&[
            "--seed", "99", "--out-dir", dir.to_str().unwrap(), "--json", "approx", "--d", "2", "--epsilon", "0.5",
            "--q", "0.95", "--repeats", "200",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v = stdout_json(&out);
        assert_eq!(v["m"], 160);
        assert!(v["violation_fraction"].as_f64().unwrap() <= 0.05);
    }
    let x = std::fs::read(a.path().join("approx.csv")).unwrap();
    assert_eq!(x, std::fs::read(b.path().join("approx.csv")).unwrap());

    let (header, rows) = csv_records(&a.path().join("approx.csv"));
    assert_eq!(
        header,
        ["repeat", "m", "epsilon", "q", "n", "ratio_1", "ratio_2", "ratio_3", "max_deviation", "violated"]
    );
    assert_eq!(rows.len(), 200);
    assert_eq!(&rows[0][1], "160");
    let json: Value = serde_json::from_str(&std::fs::read_to_string(a.path().join("approx.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 99);
    assert!(json["wall_clock_seconds"].as_f64().is_some());
    let svg = std::fs::read_to_string(a.path().join("approx.svg")).unwrap();
    assert!(svg.contains("seed: 99") && svg.contains("</svg>"));
}

#[test]
fn simulate_sweep_writes_one_row_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = sudest(&[
        "--seed", "5", "--out-dir", dir.path().to_str().unwrap(), "simulate", "--d", "2", "--n", "1,2,3,4", "-N",
        "2000", "--trials", "60",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_records(&dir.path().join("simulate.csv"));
    assert_eq!(rows.len(), 4);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for row in &rows {
        let scaled: f64 = row[col("scaled")].parse().unwrap();
        // d(d+1)²(d−1)/4 = 4.5 at d = 2; 60 trials leave roughly 20% noise.
        assert!((3.0..6.5).contains(&scaled), "scaled constant {scaled}");
    }
    assert!(dir.path().join("simulate.svg").exists());
}

#[test]
fn random_measurement_costs_a_factor_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = sudest(&[
        "--seed", "8", "--out-dir", dir.path().to_str().unwrap(), "--json", "simulate", "--n", "1", "-N", "2000",
        "--trials", "60", "--measurement", "random",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ratio = stdout_json(&out)["rows"][0]["report"]["ratio"].as_f64().unwrap();
    assert!((1.5..2.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sudest"))
        .args(["--seed", "3", "approx", "--repeats", "4"])
        .env("SUDEST_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("approx.csv").exists());
}

#[test]
fn verify_reports_and_perturbation_fails() {
    let ok = sudest(&["--json", "verify", "--only", "optimal_qfi,injectivity"]);
    assert_eq!(code(&ok), 0);
    let v = stdout_json(&ok);
    assert_eq!(v["result"]["passed"], Value::Bool(true));
    assert_eq!(v["result"]["checks"].as_array().unwrap().len(), 2);

    let bad = sudest(&["verify", "--only", "optimal_qfi", "--perturb", "optimal_qfi"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));

    let list = sudest(&["verify", "--list"]);
    assert_eq!(String::from_utf8_lossy(&list.stdout).lines().count(), 11);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"d": 3, "n": 1, "state": "sic"}"#).unwrap();
    let from_file = stdout_json(&sudest(&["--config", cfg.to_str().unwrap(), "--json", "qfi"]));
    assert_eq!(from_file["d"], 3);
    let overridden = stdout_json(&sudest(&["--config", cfg.to_str().unwrap(), "--json", "qfi", "--d", "2"]));
    assert_eq!(overridden["d"], 2);
}
