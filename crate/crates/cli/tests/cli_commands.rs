use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use resalign_cli::table::read_table;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_resalign"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_same_files(a: &Path, b: &Path, names: &[&str]) {
    for name in names {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert!(x == y, "{name} differs between identical runs");
    }
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let (header, rows) = read_table(path).unwrap();
    let c = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[c].clone()).collect()
}

fn real(path: &Path, name: &str) -> f64 {
    column(path, name)[0].parse().unwrap()
}

#[test]
fn train_and_metrics_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs().join("synthetic_smoke.toml");
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|n| tmp.path().join(n)).collect();
    for d in &dirs {
        let o = run(&["train", "--config", config.to_str().unwrap(), "--run-dir", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let ckpt = d.join("model.ckpt");
        let o = run(&["metrics", "--checkpoint", ckpt.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_same_files(
        &dirs[0],
        &dirs[1],
        &[
            "config.toml",
            "model.ckpt",
            "history.csv",
            "ra_blocks.csv",
            "ra_pairs.csv",
            "ra_summary.csv",
            "alignment_ujv.svg",
            "alignment_vju.svg",
            "ra2_ujv.svg",
            "ra2_vju.svg",
            "singular_values.svg",
            "ra4.svg",
            "trajectory.svg",
        ],
    );
    let acc = column(&dirs[0].join("history.csv"), "train_accuracy");
    assert_eq!(acc.len(), 20);
    let (_, blocks) = read_table(&dirs[0].join("ra_blocks.csv")).unwrap();
    assert_eq!(blocks.len(), 4);
    assert_eq!(blocks[0][0], "1");
}

#[test]
fn metrics_overrides_change_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let config = configs().join("synthetic_smoke.toml");
    let d = tmp.path().join("run");
    assert!(run(&["train", "--config", config.to_str().unwrap(), "--run-dir", d.to_str().unwrap()]).status.success());
    let out = tmp.path().join("m");
    let o = run(&[
        "metrics",
        "--checkpoint",
        d.join("model.ckpt").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--k",
        "3",
        "--inputs",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, summary) = read_table(&out.join("ra_summary.csv")).unwrap();
    let get = |m: &str| summary.iter().find(|r| r[0] == m).unwrap()[1].clone();
    assert_eq!(get("k"), "3");
    assert_eq!(get("inputs"), "5");
}

#[test]
fn missing_dataset_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("missing.toml");
    fs::write(
        &cfg,
        "seed = 0\n\n[dataset]\nsource = \"mnist\"\nroot = \"no-such-dir\"\nclasses = [0, 1]\n",
    )
    .unwrap();
    let o = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("no-such-dir"), "{err}");
}

#[test]
fn config_errors_report_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "seed = 0\n\n[model]\nwidth = 16\nblocks = \"four\"\n").unwrap();
    let o = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.toml:5:"), "{err}");

    fs::write(&cfg, "seed = 0\n[dataset]\nsource = \"synthetic\"\nmixture_classes = 2\nper_class = 4\ndim = 3\nseparation = 1.0\n[train]\nepochs = 3\nbatch_size = 0\n").unwrap();
    let err = stderr(&run(&["train", "--config", cfg.to_str().unwrap()]));
    assert!(err.contains("bad.toml:10:"), "{err}");
}

#[test]
fn ujm_default_run_matches_the_optimum() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("ujm");
    let o = run(&["ujm", "--run-dir", d.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = d.join("ujm_verdict.csv");
    assert_eq!(column(&v, "blocks"), ["4"]);
    assert_eq!(column(&v, "dim"), ["8"]);
    assert!(real(&v, "loss_gap").abs() < 1e-6);
    assert!(real(&v, "max_rank1_ratio") < 1e-3);
    assert!(real(&v, "alignment") > 0.999);
    assert!(real(&v, "w_alignment") > 0.999);
    assert!(real(&v, "sv_cv") < 1e-3);
    assert_eq!(column(&v, "degenerate"), ["0"]);
    let (_, history) = read_table(&d.join("ujm_history.csv")).unwrap();
    assert!(history.len() > 1);
}

#[test]
fn ujm_heavy_penalty_collapses_the_jacobians() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("ujm");
    let o = run(&["ujm", "--lambda", "1e3", "--run-dir", d.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = d.join("ujm_verdict.csv");
    assert!(real(&v, "oracle_s") < 1e-3);
    assert!((real(&v, "objective") - std::f64::consts::LN_2).abs() < 1e-3);
}

#[test]
fn ujm_explicit_probe_sets_the_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["ujm", "--delta-x", "1,-2,0.5", "--dim", "8", "--run-dir", tmp.path().join("u").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(column(&tmp.path().join("u/ujm_verdict.csv"), "dim"), ["3"]);
}

#[test]
fn theory_passes_and_the_perturbation_hook_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = run(&["theory", "--trials", "500", "--run-dir", tmp.path().join("ok").to_str().unwrap()]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    let passed = column(&tmp.path().join("ok/theory.csv"), "passed");
    assert!(passed.iter().all(|p| p == "1"));

    let bad = run(&[
        "theory",
        "--trials",
        "500",
        "--perturb-singular-values",
        "0.01",
        "--run-dir",
        tmp.path().join("bad").to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("check failed"));
}

#[test]
fn svd_bench_writes_accurate_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("bench");
    let o = run(&["svd-bench", "--dim", "60", "--matrices", "2", "--run-dir", d.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let errs = column(&d.join("svd_bench.csv"), "max_rel_err");
    assert_eq!(errs.len(), 2);
    assert!(errs.iter().all(|e| e.parse::<f64>().unwrap() < 1e-8));
}

#[test]
fn default_run_dirs_do_not_collide() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().to_str().unwrap();
    for _ in 0..2 {
        let o = run(&["theory", "--trials", "10", "--output-dir", base]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 2);
}
