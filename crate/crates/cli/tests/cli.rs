use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_growdp"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn pmwg_smoke_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pmwg.csv");
    let cfg = configs().join("pmwg_smoke.json");
    let o = run(&["run-pmwg", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("trial,t,j,query_id,true_answer,released,abs_error,hard_flag,hard_cum,budget_cap,eps_ledger\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("pmwg.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failure_fraction_at_alpha"], 0.0);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("scheduler_laplace.json");
    let mut files = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let o = run(&["run-scheduler", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        files.push(fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);

    let out = dir.path().join("c.csv");
    let o = run(&[
        "run-scheduler",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "99",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_ne!(files[0], fs::read(&out).unwrap());
}

#[test]
fn zero_trials_gives_header_only() {
    let cfg = configs().join("sparse_nsg.json");
    let o = run(&["run-sparse", "--config", cfg.to_str().unwrap(), "--trials", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "trial,t,j,answer_kind,answer,hard_cum,eps_report\n");
    let summary: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(summary["trials"], 0);
    assert_eq!(summary["max_abs_error"], 0.0);
}

#[test]
fn remaining_runners_succeed() {
    for (cmd, file) in [
        ("run-improver", "improver_laplace.json"),
        ("run-ermg", "ermg.json"),
        ("run-sparse", "sparse_nsg.json"),
    ] {
        let cfg = configs().join(file);
        let o = run(&[cmd, "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stdout.is_empty());
    }
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"mode":"atg","threshold":0.5,"c":1,"n":10,"bogus":1}"#).unwrap();
    let o = run(&["run-sparse", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"alpha":-1,"eps":1,"n":10,"N":2,"stream":{"kind":"iid","horizon":20},"workload":{"kind":"counting"}}"#,
    )
    .unwrap();
    let o = run(&["run-pmwg", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = run(&["run-pmwg"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn compose_prints_totals() {
    let cfg = configs().join("compose.json");
    let o = run(&["compose", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((report["basic_eps"].as_f64().unwrap() - 0.4).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "[0.1, -1]").unwrap();
    assert_eq!(code(&run(&["compose", "--config", bad.to_str().unwrap()])), 2);
}

#[test]
fn audit_negative_control_flags() {
    let o = run(&["dp-audit", "--target", "laplace-halved", "--samples", "200000", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["flagged"], true);
    assert_eq!(code(&run(&["dp-audit"])), 2);
}

#[test]
fn validate_passes() {
    let o = run(&["validate", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8(o.stdout).unwrap().lines().all(|l| l.starts_with("PASS")));
}
