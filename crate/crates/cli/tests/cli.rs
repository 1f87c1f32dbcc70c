use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn chef(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chef"))
        .args(args)
        .env("CHEF_LOG", "warn")
        .output()
        .expect("spawn chef")
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("data");
    let mut args = vec!["synth", "--n", "250", "--d", "6", "--c", "2", "--seed", "3", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = chef(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn write_config(dir: &Path, name: &str, body: Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

fn pipeline(annotators: Value) -> Value {
    json!({
        "budget": 20,
        "batch_b": 10,
        "strategy": "three",
        "updater": "deltagrad",
        "selector": "infl",
        "use_increm": true,
        "gamma": 0.8,
        "annotators": annotators
    })
}

fn stripped(path: &Path) -> String {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    fn strip(v: &mut Value) {
        match v {
            Value::Object(m) => {
                m.remove("ms");
                m.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    strip(&mut v);
    v.to_string()
}

#[test]
fn missing_manifest_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.json",
        json!({ "manifest": "nowhere/manifest.json", "pipeline": pipeline(json!({ "kind": "service" })) }),
    );
    let o = chef(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere/manifest.json"));
}

#[test]
fn unknown_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let cfg = write_config(
        dir.path(),
        "run.json",
        json!({ "manifest": data.join("manifest.json"), "colour": "blue" }),
    );
    assert_eq!(chef(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn seeded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let cfg = write_config(
        dir.path(),
        "run.json",
        json!({
            "manifest": "data/manifest.json",
            "seed": 1,
            "pipeline": pipeline(json!({ "kind": "simulated", "k": 3, "error_rate": 0.05 }))
        }),
    );
    let mut reports = Vec::new();
    for out in ["a", "b"] {
        let out = dir.path().join(out);
        let o = chef(&["run", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("influence_round_0.csv").exists());
        assert!(out.join("influence_round_1.csv").exists());
        reports.push(stripped(&out.join("report.json")));
    }
    assert_eq!(reports[0], reports[1]);
    let report: Value = serde_json::from_str(&reports[0]).unwrap();
    assert_eq!(report["seed"], 7);
    assert_eq!(report["spent"], 20);

    let o = chef(&["report", dir.path().join("a/report.json").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("spent 20/20"));
}

#[test]
fn synth_writes_the_requested_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = chef(&[
        "synth", "--n", "200", "--d", "10", "--c", "2", "--noise", "0", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["num_classes"], 2);
    let bytes = fs::read(out.join("features.bin")).unwrap();
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    assert_eq!((rows, cols), (200, 10));

    let ds = chef_core::dataio::load_dataset(out.join("manifest.json")).unwrap();
    assert_eq!(ds.num_probabilistic(), 0);
}

#[test]
fn synth_annotators_flip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = chef(&[
        "synth", "--n", "250", "--d", "4", "--c", "3", "--flip-rate", "0.05", "--val-fraction", "0.1",
        "--test-fraction", "0.1", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = chef_core::dataio::load_dataset(out.join("manifest.json")).unwrap();
    assert_eq!(ds.train_ids().len(), 200);
    let text = fs::read_to_string(out.join("annotators.csv")).unwrap();
    let mut flips = [0usize; 3];
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let f: Vec<usize> = line.split(',').map(|v| v.parse().unwrap()).collect();
        rows += 1;
        if ds.ground_truth(f[1]) != Some(f[2] - 1) {
            flips[f[0]] += 1;
        }
    }
    assert_eq!(rows, 600);
    assert_eq!(flips, [10, 10, 10]);
}

#[test]
fn serve_on_an_occupied_port_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let cfg = write_config(
        dir.path(),
        "serve.json",
        json!({ "manifest": data.join("manifest.json"), "pipeline": pipeline(json!({ "kind": "service" })) }),
    );
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = chef(&["serve", "--config", cfg.to_str().unwrap(), "--bind", &addr]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn serve_requires_service_annotators() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let cfg = write_config(
        dir.path(),
        "serve.json",
        json!({
            "manifest": data.join("manifest.json"),
            "pipeline": pipeline(json!({ "kind": "simulated", "k": 3, "error_rate": 0.05 }))
        }),
    );
    assert_eq!(chef(&["serve", "--config", cfg.to_str().unwrap(), "--bind", "127.0.0.1:0"]).status.code(), Some(2));
}
