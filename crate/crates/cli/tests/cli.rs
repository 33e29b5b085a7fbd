use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use httq_core::SimRecord;
use serde::Deserialize;

fn httq(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_httq"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HTTQ_WORKERS")
        .output()
        .expect("binary runs")
}

fn run_dir(out: &Output) -> PathBuf {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SMALL_CONFIG: &str = r#"{
    "n": 36, "alpha": 1.0, "mu": 1.0, "beta": -0.5,
    "patience": { "mode": "no_scaling", "law": { "family": "exponential", "rate": 1.0 } },
    "horizon": 4.0
}"#;

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn simulate_is_bit_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "exp.json",
        &format!(r#"{{"config": {SMALL_CONFIG}, "replications": 2}}"#),
    );
    let spec = spec.to_str().unwrap();
    let a = run_dir(&httq(&["simulate", spec, "--seed", "7"], &tmp.path().join("a")));
    let b = run_dir(&httq(&["simulate", spec, "--seed", "7"], &tmp.path().join("b")));
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), fb.len());
    assert!(fa.len() >= 8);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{x:?}");
    }
    let c = run_dir(&httq(&["simulate", spec, "--seed", "8"], &tmp.path().join("a")));
    assert_ne!(
        fs::read(a.join("events_r0.csv")).unwrap(),
        fs::read(c.join("events_r0.csv")).unwrap()
    );
}

#[derive(Deserialize)]
struct Header {
    spec_hash: String,
    seed: u64,
    version: String,
}

#[test]
fn every_artifact_carries_the_header() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "exp.json", &format!(r#"{{"config": {SMALL_CONFIG}}}"#));
    let dir = run_dir(&httq(&["simulate", spec.to_str().unwrap(), "--seed", "3"], tmp.path()));
    let mut hashes = Vec::new();
    for f in files(&dir) {
        let name = f.file_name().unwrap().to_str().unwrap().to_string();
        let bytes = fs::read(&f).unwrap();
        let header: Header = if name.ends_with(".csv") {
            let first = String::from_utf8(bytes).unwrap().lines().next().unwrap().to_string();
            let kv: std::collections::HashMap<&str, &str> = first
                .trim_start_matches("# ")
                .split(',')
                .map(|p| p.split_once('=').unwrap())
                .collect();
            Header {
                spec_hash: kv["spec_hash"].into(),
                seed: kv["seed"].parse().unwrap(),
                version: kv["version"].into(),
            }
        } else if name.ends_with(".json") {
            let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            serde_json::from_value(v["header"].clone()).unwrap()
        } else {
            assert!(name.ends_with(".bin"), "{name}");
            let (h, rec): (Header, SimRecord) = bincode::deserialize(&bytes).unwrap();
            assert_eq!(rec.meta.seed, 3);
            h
        };
        assert_eq!(header.seed, 3, "{name}");
        assert_eq!(header.version, env!("CARGO_PKG_VERSION"));
        hashes.push(header.spec_hash);
    }
    hashes.dedup();
    assert_eq!(hashes.len(), 1);
    assert!(dir.to_str().unwrap().contains(&hashes[0][..16]));
    let schema: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("schema.json")).unwrap()).unwrap();
    assert!(schema["data"]["files"]["paths_r0.csv"].is_array());
}

#[test]
fn renewal_shorthand_poisson() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(&httq(&["renewal", "--service", "exp:rate=1", "--T", "10"], tmp.path()));
    let text = fs::read_to_string(dir.join("renewal.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(2) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cols[1] - cols[0]).abs() <= 1e-4, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 1001);
}

#[test]
fn unknown_keys_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "bad.json",
        &format!(r#"{{"config": {SMALL_CONFIG}, "replicas": 3, "colour": "red"}}"#),
    );
    let out = httq(&["simulate", spec.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("replicas") && err.contains("colour"), "{err}");
}

#[test]
fn inconsistent_regime_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "nds.json",
        r#"{"config": {
            "n": 100, "alpha": 0.5, "mu": 1.0, "beta": 0.0,
            "service": { "family": "deterministic", "value": 1.0 },
            "patience": { "mode": "no_scaling", "law": { "family": "exponential", "rate": 1.0 } },
            "horizon": 5.0
        }}"#,
    );
    let out = httq(&["simulate", spec.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

fn sweep_spec(thresholds: &str) -> String {
    format!(
        r#"{{
            "base": {SMALL_CONFIG},
            "n_list": [16, 256],
            "replications": 40,
            "checkpoints": [1.0],
            "limit_step": 0.01,
            "wait_points": 40,
            "thresholds": {thresholds}
        }}"#
    )
}

#[test]
fn sweep_check_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let pass = write(
        tmp.path(),
        "pass.json",
        &sweep_spec(r#"{"statistics": ["little_gap"]}"#),
    );
    let out = httq(&["sweep", pass.to_str().unwrap(), "--check", "--seed", "5"], tmp.path());
    let dir = run_dir(&out);
    for f in ["report.json", "rows.csv", "ks.csv", "summary.csv", "schema.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }

    let fail = write(tmp.path(), "fail.json", &sweep_spec(r#"{"ks_max": 0.0}"#));
    let out = httq(&["sweep", fail.to_str().unwrap(), "--check"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let out = httq(&["sweep", fail.to_str().unwrap()], tmp.path());
    assert!(out.status.success());
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "s.json", &sweep_spec("{}"));
    let spec = spec.to_str().unwrap();
    let serial = run_dir(&httq(&["sweep", spec, "--workers", "1"], &tmp.path().join("a")));
    let parallel = Command::new(env!("CARGO_BIN_EXE_httq"))
        .args(["sweep", spec, "--out"])
        .arg(tmp.path().join("b"))
        .env("HTTQ_WORKERS", "3")
        .output()
        .unwrap();
    let parallel = run_dir(&parallel);
    for f in ["report.json", "rows.csv", "ks.csv"] {
        assert_eq!(fs::read(serial.join(f)).unwrap(), fs::read(parallel.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn maps_and_compare_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(
        tmp.path(),
        "m.json",
        r#"{"map": "skorokhod", "times": [0, 1, 2], "values": [0.2, -0.8, 0.4],
            "g": {"kind": "polynomial", "coeffs": [0, 1]}, "grid_step": 0.01}"#,
    );
    let dir = run_dir(&httq(&["maps", spec.to_str().unwrap()], tmp.path()));
    let text = fs::read_to_string(dir.join("solution.csv")).unwrap();
    for line in text.lines().skip(2) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[2] >= 0.0);
    }

    let spec = write(
        tmp.path(),
        "c.json",
        &format!(r#"{{"configs": [{SMALL_CONFIG}], "seeds": 3}}"#),
    );
    let dir = run_dir(&httq(&["compare", spec.to_str().unwrap(), "--check"], tmp.path()));
    let text = fs::read_to_string(dir.join("comparison.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + 3);
    assert!(text.lines().skip(2).all(|l| l.ends_with(',')));
}

#[test]
fn renewal_needs_file_or_both_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = httq(&["renewal", "--service", "exp:rate=1"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = httq(&["renewal", "--service", "gamma:k=1", "--T", "1"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
