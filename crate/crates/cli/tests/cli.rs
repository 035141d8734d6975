use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn tpgate(args: &[&str], env_cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tpgate"));
    cmd.args(args).env_remove("TPGATE_CACHE_DIR");
    if let Some(dir) = env_cache {
        cmd.env("TPGATE_CACHE_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, value: Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn small() -> Value {
    json!({
        "fewbody": { "levels": 2, "per_level": 2 },
        "field_grid": { "start": 1.0, "stop": 3.0, "step": 0.5 },
        "spectrum": { "fields": { "start": 1.0, "stop": 3.0, "step": 0.5 } },
        "coulomb": { "q_points": 11, "states": 2, "fields": { "start": 1.0, "stop": 2.0, "step": 0.5 } }
    })
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Manifest file list equals the directory listing minus the manifest itself.
fn assert_manifest_complete(dir: &Path) {
    let listed: BTreeSet<String> = manifest(dir)["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    let present: BTreeSet<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    assert_eq!(listed, present);
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn coulomb_outputs_are_deterministic_and_ordered() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), small());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = tpgate(&["coulomb", "--config", &cfg, "--out", d.to_str().unwrap()], None);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_manifest_complete(d);
    }
    for f in ["formfactor.csv", "coulomb_vs_B.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    for row in csv_rows(&a.join("formfactor.csv")) {
        assert!(row[1] >= row[2] && row[2] >= row[3], "{row:?}");
    }
    let header = std::fs::read_to_string(a.join("formfactor.csv")).unwrap();
    assert!(header.starts_with("q,F_alpha=0.5,F_alpha=1,F_alpha=2\n"));
}

#[test]
fn small_alpha_column_is_two_dimensional() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), small());
    let out = tmp.path().join("o");
    let o = tpgate(&["coulomb", "--config", &cfg, "--alphas", "1e-6", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success());
    let pi2 = std::f64::consts::PI.powi(2);
    assert!(csv_rows(&out.join("formfactor.csv")).iter().all(|r| (r[1] - pi2).abs() < 1e-4));
}

#[test]
fn empty_alpha_list_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = tpgate(&["coulomb", "--alphas", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = small();
    v["fewbody"]["cutoff"] = json!(3);
    let cfg = write_config(tmp.path(), v);
    let out = tmp.path().join("o");
    let o = tpgate(&["response", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_gate_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = tpgate(&["synthesize", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let cfg = write_config(tmp.path(), small());
    let o = tpgate(&["coulomb", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn response_cache_and_single_point_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let mut v = small();
    v["field_grid"] = json!({ "start": 2.0, "stop": 2.0, "step": 1.0 });
    let cfg = write_config(tmp.path(), v);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = tpgate(&["response", "--config", &cfg, "--out", a.to_str().unwrap()], Some(&cache));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&a)["notes"]["response_cache"], "miss");
    assert_eq!(manifest(&a)["notes"]["interpolation"], "disabled");
    let o = tpgate(&["response", "--config", &cfg, "--out", b.to_str().unwrap()], Some(&cache));
    assert!(o.status.success());
    assert_eq!(manifest(&b)["notes"]["response_cache"], "hit");
    assert_eq!(std::fs::read(a.join("response.csv")).unwrap(), std::fs::read(b.join("response.csv")).unwrap());
    assert_eq!(csv_rows(&a.join("response.csv")).len(), 1);
    assert_manifest_complete(&b);
}

#[test]
fn uncorrelated_response_has_unit_dipole() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = small();
    v["material"] = json!({ "beta_coeff": 0.0 });
    v["fewbody"] = json!({
        "levels": 2,
        "per_level": 1,
        "bright_trion": { "lz": 0, "sector": "singlet", "electron_sz": 0, "hole_spin": "Down" }
    });
    v["field_grid"] = json!({ "start": 1.0, "stop": 2.0, "step": 1.0 });
    let cfg = write_config(tmp.path(), v);
    let out = tmp.path().join("o");
    let o = tpgate(&["response", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(csv_rows(&out.join("response.csv")).iter().all(|r| (r[4].abs() - 1.0).abs() < 1e-12));
}

#[test]
fn spectrum_reports_crossing_note() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), small());
    let out = tmp.path().join("o");
    let o = tpgate(&["spectrum", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&out.join("binding.csv")).len(), 5);
    assert!(manifest(&out)["notes"].get("crossing_field_T").is_some());
    assert_manifest_complete(&out);
}

#[test]
fn synthesis_run_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = small();
    v["synthesis"] = json!({ "pulses": 1, "gate_time": 1.0, "optimizer": { "max_iterations": 15, "restarts": 0 }, "average_samples": 50,
        "bounds": { "field": [1.0, 3.0] } });
    v["scan"] = json!({ "start": 1.0, "stop": 3.0, "step": 0.5 });
    let cfg = write_config(tmp.path(), v);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = tpgate(
            &["synthesize", "--config", &cfg, "--gate", "X", "--seed", "7", "--trajectory", "--scan", "--tomography", "--repeat", "3", "--out", d.to_str().unwrap()],
            None,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_manifest_complete(d);
    }
    for f in ["result.json", "trace.csv", "trajectory.csv", "bloch.csv", "scan.csv", "tomography.csv", "repeated.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let r: Value = serde_json::from_str(&std::fs::read_to_string(a.join("result.json")).unwrap()).unwrap();
    assert_eq!(r["seed"], 7);
    assert_eq!(r["gate"], "X");

    let s = tmp.path().join("s");
    let o = tpgate(&["scan", "--config", &cfg, "--result", a.join("result.json").to_str().unwrap(), "--out", s.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(a.join("scan.csv")).unwrap(), std::fs::read(s.join("scan.csv")).unwrap());

    let e = tmp.path().join("e");
    let o = tpgate(&["evolve", "--config", &cfg, "--result", a.join("result.json").to_str().unwrap(), "--out", e.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(a.join("trajectory.csv")).unwrap(), std::fs::read(e.join("trajectory.csv")).unwrap());
}
