//! End-to-end behaviour of the `massflow` binary: exit codes, output files,
//! formats and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn massflow(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_massflow"));
    cmd.args(args).env_remove("MASSFLOW_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut all = vec!["--out", out];
    all.extend_from_slice(args);
    massflow(&all, &[])
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn malformed_config_exits_2_without_writing() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.json");
    let out = tmp.path().join("out");
    for text in ["{\"id\": ", "{\"id\": \"x\", \"p\": 3.0}", "[1, 2]"] {
        std::fs::write(&cfg, text).unwrap();
        let o = massflow(
            &[
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "genus",
            ],
            &[],
        );
        assert_eq!(
            o.status.code(),
            Some(2),
            "{text}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!out.exists(), "{text}: output directory was created");
    }
}

#[test]
fn invalid_values_and_flags_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = massflow(
        &["--out", out.to_str().unwrap(), "--p", "1.5", "genus"],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = massflow(
        &["--out", out.to_str().unwrap(), "--no-such-flag", "genus"],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = massflow(
        &["--out", out.to_str().unwrap(), "accept", "--only", "99"],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn violated_hypothesis_exits_3_without_writing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    // Two positive solutions need a mass-supercritical exponent.
    let o = run_in(&out, &["--p", "3", "two", "--mu", "1"]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    // Saddles need a mass-supercritical exponent as well.
    let o = run_in(&out, &["--p", "3", "saddle", "--mu", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn two_writes_exactly_two_ordered_positive_records() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), &["--p", "7", "--n", "2048", "two", "--mu", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs: Vec<Value> = lines(&tmp.path().join("two.jsonl"))
        .iter()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 2);
    for key in [
        "id",
        "mu",
        "tau",
        "p",
        "N",
        "k",
        "lambda",
        "energy",
        "morse",
        "constrained_morse",
        "sign_changes",
        "residual",
        "mass_err",
        "kind",
    ] {
        assert!(recs.iter().all(|r| r.get(key).is_some()), "missing {key}");
    }
    assert_eq!(recs[0]["kind"], "positive_low");
    assert_eq!(recs[1]["kind"], "positive_high");
    assert!(recs[0]["lambda"].as_f64().unwrap() < recs[1]["lambda"].as_f64().unwrap());
    assert!(recs
        .iter()
        .all(|r| r["sign_changes"] == 0 && r["morse"] == 1));
}

#[test]
fn floats_are_written_with_17_significant_digits() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), &["genus", "--k", "2", "--mu", "1e-2"]);
    assert!(o.status.success());
    let line = &lines(&tmp.path().join("genus.jsonl"))[0];
    assert!(line.contains("\"mu\":1.0000000000000000e-2"), "{line}");
    let v: Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["k"], 2);
    assert_eq!(v["sign_changes"], 1);
}

#[test]
fn curve_csv_has_header_and_unix_newlines() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), &["--p", "7", "--n", "512", "curve"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(tmp.path().join("curve.csv")).unwrap();
    assert!(!text.contains('\r'));
    let mut rows = text.lines();
    let header = rows.next().unwrap();
    assert_eq!(header, "lambda,M,E,u0,residual");
    let rows: Vec<&str> = rows.collect();
    assert!(rows.len() > 8);
    assert!(rows.iter().all(|r| r.split(',').count() == 5));
}

#[test]
fn same_config_and_seed_give_identical_records() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_in(&a, &["--seed", "11", "--workers", "1", "sweep"])
        .status
        .success());
    assert!(run_in(&b, &["--seed", "11", "--workers", "3", "sweep"])
        .status
        .success());
    for f in ["sweep.jsonl", "levels.jsonl", "sweep.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let c = tmp.path().join("c");
    assert!(run_in(&c, &["--seed", "12", "sweep"]).status.success());
    assert_ne!(
        std::fs::read(a.join("sweep.jsonl")).unwrap(),
        std::fs::read(c.join("sweep.jsonl")).unwrap()
    );
}

#[test]
fn environment_overrides_the_output_directory() {
    let tmp = TempDir::new().unwrap();
    let (flag, env) = (tmp.path().join("flag"), tmp.path().join("env"));
    let o = massflow(
        &["--out", flag.to_str().unwrap(), "flow", "--mu", "1e-2"],
        &[("MASSFLOW_OUT", &env)],
    );
    assert!(o.status.success());
    assert!(env.join("flow.csv").exists() && env.join("flow.jsonl").exists());
    assert!(!flag.exists());
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    let mut c = massflow::config::ExperimentConfig {
        id: "from-file".into(),
        mu_list: vec![1e-2],
        ..Default::default()
    };
    c.k_list = vec![3];
    std::fs::write(&cfg, c.to_json().unwrap()).unwrap();
    let o = run_in(
        tmp.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--id",
            "from-flag",
            "genus",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&lines(&tmp.path().join("genus.jsonl"))[0]).unwrap();
    assert_eq!(v["id"], "from-flag");
    assert_eq!(v["k"], 3);
    assert_eq!(v["sign_changes"], 2);
}

#[test]
fn morse_report_classifies_a_record_family() {
    let tmp = TempDir::new().unwrap();
    assert!(run_in(tmp.path(), &["sweep"]).status.success());
    let o = run_in(
        tmp.path(),
        &[
            "morse",
            "--records",
            tmp.path().join("sweep.jsonl").to_str().unwrap(),
        ],
    );
    assert!(o.status.success());
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("morse.json")).unwrap())
            .unwrap();
    assert_eq!(report["trend"], "bounded");
}

#[test]
fn accept_runs_selected_criteria() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), &["accept", "--only", "1,4"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout.contains("criterion 01 PASS") && stdout.contains("criterion 04 PASS"),
        "{stdout}"
    );
    assert!(tmp.path().join("acceptance/acceptance.json").exists());
    let o = run_in(tmp.path(), &["accept", "--only", "2", "--gn-scale", "0.9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("criterion 02 FAIL"));
}
