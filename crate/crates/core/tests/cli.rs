use std::path::Path;
use std::process::{Command, Output};

use qcorr::io::{read_manifest, verify_manifest, MANIFEST_NAME};

fn qcorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcorr"))
        .args(args)
        .env_remove("QCORR_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let o = qcorr(&[]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stderr).to_string() + &stdout(&o);
    assert!(text.contains("Usage"), "{text}");
}

#[test]
fn unknown_subcommand_and_flag_exit_1() {
    assert_eq!(qcorr(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qcorr(&["regimes", "--frobnicate"]).status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    assert_eq!(qcorr(&["--help"]).status.code(), Some(0));
}

#[test]
fn regimes_hand_example() {
    let o = qcorr(&["regimes", "--hbar", "0.1", "--dt", "0.1", "--p", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("uncertainty_lhs 5.0\n"), "{out}");
    assert!(out.contains("wavelike_lhs 0.0\n"), "{out}");
    assert!(out.contains("label uncertainty_dominated"), "{out}");
}

#[test]
fn regimes_json_and_indeterminate() {
    let o = qcorr(&["regimes", "--p", "0", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["label"], "indeterminate");
    assert!(v["uncertainty"].is_null());
}

#[test]
fn config_errors_exit_1() {
    assert_eq!(qcorr(&["regimes", "--hbar", "-1"]).status.code(), Some(1));
    assert_eq!(qcorr(&["regimes", "--set", "nonsense=1"]).status.code(), Some(1));
    assert_eq!(qcorr(&["regimes", "--config", "/nonexistent/file.cfg"]).status.code(), Some(1));
    let o = qcorr(&["sweep", "--hbar-count", "1", "--out", "/tmp/qcorr-never-written"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2() {
    // a window of a single sigma cannot hold the collapsed packet
    let dir = tempfile::tempdir().unwrap();
    let o = qcorr(&[
        "simulate",
        "--set",
        "uncertainty_prefactor=1",
        "--set",
        "momentum_prefactor=1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t = 0"));
}

fn simulate_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    qcorr(&args)
}

#[test]
fn simulate_writes_manifest_that_round_trips() {
    let first = tempfile::tempdir().unwrap();
    let o = simulate_into(first.path(), &["--hbar", "1e-3", "--dt", "0.05", "-n", "3", "--t-max", "2", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m1 = read_manifest(first.path()).unwrap();
    assert!(verify_manifest(first.path(), &m1).is_empty());
    let names: Vec<&str> = m1.files.iter().map(|f| f.name.as_str()).collect();
    for f in ["config.cfg", "record.json", "trajectories.csv", "rms.csv", "phase_portrait.svg"] {
        assert!(names.contains(&f), "{f} missing from {names:?}");
    }
    assert!(!names.contains(&MANIFEST_NAME));
    assert_eq!(m1.seed, 4);

    // feeding the snapshot back reproduces every file byte for byte
    let second = tempfile::tempdir().unwrap();
    let cfg = first.path().join("config.cfg");
    let o = simulate_into(second.path(), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let m2 = read_manifest(second.path()).unwrap();
    assert_eq!(m1.files, m2.files);
}

#[test]
fn csv_outputs_parse_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate_into(dir.path(), &["--hbar", "1e-2", "-n", "2", "--t-max", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let m = read_manifest(dir.path()).unwrap();
    for entry in m.files.iter().filter(|f| f.name.ends_with(".csv")) {
        let mut rd = csv::Reader::from_path(dir.path().join(&entry.name)).unwrap();
        let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(Some(&header), entry.columns.as_ref(), "{}", entry.name);
        let width = header.len();
        let mut rows = 0;
        for r in rd.records() {
            assert_eq!(r.unwrap().len(), width);
            rows += 1;
        }
        assert!(rows > 0, "{}", entry.name);
    }
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_qcorr"))
        .args(["simulate", "--hbar", "1e-2", "-n", "1", "--t-max", "0.5"])
        .env("QCORR_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join(MANIFEST_NAME).exists());
}

#[test]
fn sweep_writes_heatmap_bundle_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "sweep", "--hbar-min", "1e-3", "--hbar-max", "1e-2", "--hbar-count", "2", "--dt-min", "0.05", "--dt-max",
        "0.1", "--dt-count", "2", "-n", "2", "--t-max", "1", "--set", "husimi_resolution=16", "--set",
        "grid_points=64", "--out", out,
    ];
    let o = qcorr(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m1 = read_manifest(dir.path()).unwrap();
    assert!(verify_manifest(dir.path(), &m1).is_empty());
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(doc["hbar_values"].as_array().unwrap().len(), 2);
    assert_eq!(doc["divergence_time"][1].as_array().unwrap().len(), 2);

    let mut resumed = args.to_vec();
    resumed.push("--resume");
    assert_eq!(qcorr(&resumed).status.code(), Some(0));
    assert_eq!(read_manifest(dir.path()).unwrap().files, m1.files);
}
