use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_atomic-pursuit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn atomic-pursuit")
}

fn read_json(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("result.json")).unwrap()).unwrap()
}

fn read_trace(dir: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(dir.join("trace.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["iter", "model_value", "support_value", "upper_bound", "gap", "bundle_size", "seconds"]
    );
    r.records()
        .map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect()
}

#[test]
fn bpdn_default_run_succeeds_with_monotone_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bpdn");
    let o = run(&["bpdn", "--n", "64", "--m", "32", "--sparsity", "4", "--delta", "1e-6", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let result = read_json(&out);
    let d_star = result["d_star"].as_f64().unwrap();
    assert_eq!(result["success"], Value::Bool(true));
    assert!(result["final_gap"].as_f64().unwrap() <= 1e-6);
    let rows = read_trace(&out);
    assert!(!rows.is_empty());
    for w in rows.windows(2) {
        assert!(w[1][3] <= w[0][3]);
    }
    for row in &rows {
        assert_eq!(row[4], row[3] - d_star);
        assert!(row[1] <= row[2] + 1e-9);
    }
    let dual = &result["duality"];
    let inner = dual["inner_product"].as_f64().unwrap();
    assert!(inner >= 1.0 - 1e-6 && inner <= dual["product"].as_f64().unwrap() * (1.0 + 1e-6));
}

#[test]
fn d_star_below_optimum_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("low");
    let o = run(&["bpdn", "--d-star", "0.1", "--out-dir", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("level set"), "{stderr}");
    let result = read_json(&out);
    assert_eq!(result["success"], Value::Bool(false));
    assert!(result["error"].as_str().unwrap().contains("level set"));
}

#[test]
fn phase_run_reports_small_recovery_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("phase");
    let o = run(&["phase", "--n", "16", "--m", "96", "--delta", "1e-4", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let result = read_json(&out);
    assert!(result["recovery"]["relative_error"].as_f64().unwrap() <= 0.1);
    assert!(result["complementarity"]["rank"].as_u64().is_some());
}

#[test]
fn identical_seeds_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let strip = |v: &mut Value| {
        v.as_object_mut().unwrap().remove("timestamp");
    };
    for kind in ["bpdn", "phase"] {
        let a = tmp.path().join(format!("{kind}-a"));
        let b = tmp.path().join(format!("{kind}-b"));
        for dir in [&a, &b] {
            let o = run(&[kind, "--seed", "5", "--delta", "1e-3", "--no-timing", "--out-dir", dir.to_str().unwrap()]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        assert_eq!(
            std::fs::read(a.join("trace.csv")).unwrap(),
            std::fs::read(b.join("trace.csv")).unwrap(),
            "{kind} trace differs"
        );
        let (mut ja, mut jb) = (read_json(&a), read_json(&b));
        strip(&mut ja);
        strip(&mut jb);
        assert_eq!(ja, jb);
    }
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.cfg");
    let out = tmp.path().join("cfg");
    std::fs::write(&cfg, "# small noisy run\nkind = bpdn\nn = 32\nm = 16\nsparsity = 3\neps = 0.05\ndelta = 1e-5\nseed = 3\n").unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let result = read_json(&out);
    assert_eq!(result["config"]["n"], 32);
    assert_eq!(result["config"]["seed"], 4);
    assert_eq!(result["config"]["eps"], 0.05);
    assert!(result["recovery"]["residual"].as_f64().unwrap() <= 0.05 + 1e-7);
}

#[test]
fn invalid_configurations_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let o = run(&["bpdn", "--sparsity", "100", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "kind = phase\n").unwrap();
    let o = run(&["bpdn", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["run", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeat_writes_one_directory_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rep");
    let o = run(&["bpdn", "--n", "32", "--m", "16", "--sparsity", "2", "--repeat", "3", "--seed", "10", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for seed in 10..13 {
        let result = read_json(&out.join(format!("seed-{seed}")));
        assert_eq!(result["config"]["seed"], seed);
    }
}

#[test]
fn verify_passes() {
    let o = run(&["verify", "--trials", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().all(|l| !l.starts_with("FAIL")));
}
