use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cardiomr_core::{InitialCondition, ScenarioConfig};
use tempfile::TempDir;

fn cardiomr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cardiomr"))
        .args(args)
        .env("CARDIOMR_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn small_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset("example1").unwrap().with_level(4);
    cfg.t_end = 0.3;
    cfg.snapshot_times = vec![0.0, 0.3];
    cfg.stimuli[0].time = 0.1;
    cfg
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> String {
    let p = dir.join("scenario.json");
    fs::write(&p, cfg.to_json()).unwrap();
    p.to_string_lossy().into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_snapshots_metrics_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("a");
    let o = cardiomr(&["run", &cfg_path, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "timings.csv", "snapshots/t0.3000/v.csv", "snapshots/t0.3000/w.csv", "snapshots/t0.3000/leaves.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!out.join("snapshots/t0.3000/u_e.csv").exists());
    let v = fs::read_to_string(out.join("snapshots/t0.0000/v.csv")).unwrap();
    assert_eq!(v.lines().next(), Some("i,j,value"));
    assert_eq!(v.lines().count(), 1 + 16 * 16);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    let m = manifest(&out);
    assert_eq!(m["command"], "run");
    assert_eq!(m["config"]["name"], "example1");
    let outputs = m["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|f| f["path"] == "metrics.csv" && f["hash"].as_str().unwrap().len() == 64));
}

#[test]
fn rerun_from_manifest_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = write_config(tmp.path(), &small_config());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(cardiomr(&["run", &cfg_path, "--out", a.to_str().unwrap()]).status.success());
    let from_manifest = a.join("manifest.json");
    let o = cardiomr(&["run", from_manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    let files = |m: &serde_json::Value| -> Vec<(String, String)> {
        m["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|f| f["path"] != "timings.csv")
            .map(|f| (f["path"].as_str().unwrap().to_string(), f["hash"].as_str().unwrap().to_string()))
            .collect()
    };
    assert_eq!(files(&ma), files(&mb));
}

#[test]
fn invalid_config_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg.t_end = -1.0;
    let p = tmp.path().join("bad.json");
    fs::write(&p, cfg.to_json()).unwrap();
    let o = cardiomr(&["run", p.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&p, "{\"name\": ").unwrap();
    assert_eq!(cardiomr(&["run", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg.initial = InitialCondition::Uniform { v: 1e200, ue: 0.0, w: 0.0 };
    let p = write_config(tmp.path(), &cfg);
    let o = cardiomr(&["run", &p, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compare_scores_each_method() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("c");
    let o = cardiomr(&["compare", &cfg_path, "--methods", "fv,mr,mr_lts", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,t,eta,V,e1_v,e2_v,einf_v,e1_ue,e2_ue,einf_ue"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r.len(), 10);
        let e1: f64 = r[4].parse().unwrap();
        assert!(e1.is_finite() && e1 >= 0.0);
        // monodomain: no u_e columns; the fv run supplies the speed-up baseline
        assert!(r[7].is_empty());
        if r[1] == "3e-1" {
            assert!(!r[3].is_empty());
        }
    }
    assert!(out.join("snapshots/mr_lts/t0.3000/leaves.csv").is_file());
}

#[test]
fn calibrate_with_one_candidate_gives_one_row() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("k");
    let o = cardiomr(&["calibrate-c", &cfg_path, "--candidates", "1e8", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("calibration.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("C,eps_R,eta,V,e1_v\n"));
}

#[test]
fn preset_and_config_are_exclusive() {
    let o = cardiomr(&["run", "x.json", "--preset", "example1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!cardiomr(&["run"]).status.success());
}

#[test]
fn presets_conform_to_the_published_schema() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/config.schema.json")).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for name in ["example1", "example2", "example3"] {
        let doc: serde_json::Value = serde_json::from_str(&ScenarioConfig::preset(name).unwrap().to_json()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
    }
    let mut bad: serde_json::Value = serde_json::from_str(&small_config().to_json()).unwrap();
    bad["grid"]["max_level"] = serde_json::json!(0);
    assert!(!validator.is_valid(&bad));
}
