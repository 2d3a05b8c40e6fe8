use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cadet_core::Config;
use serde_json::Value;

fn cadet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadet"))
        .args(args)
        .env_remove("CADET_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cadet(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn fast_config(dir: &Path) -> String {
    let mut config = Config::toy();
    config.train.max_epochs = 2;
    let path = dir.join("fast.toml");
    fs::write(&path, config.to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Runs synth → train → transfer → ablate → export-latents → predict in
/// `root` and returns the predict output.
fn pipeline(root: &Path) -> String {
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    let config = fast_config(root);
    ok(&["--seed", "5", "synth", "--n", "300", "--out", &p("data")]);
    ok(&[
        "--seed", "5", "train", "--config", &config, "--train", &p("data/train.jsonl"), "--val", &p("data/val.jsonl"),
        "--out", &p("ckpt"),
    ]);
    ok(&[
        "--seed", "5", "transfer", "--config", &config, "--corpus", &p("data/corpus.jsonl"), "--source-style",
        "explicit", "--runs", "1", "--out", &p("transfer.json"),
    ]);
    ok(&[
        "--seed", "5", "ablate", "--config", &config, "--corpus", &p("data/corpus.jsonl"), "--disable", "cf,cycle",
        "--out", &p("ablate.json"),
    ]);
    ok(&[
        "export-latents", "--ckpt", &p("ckpt"), "--corpus", &p("data/test.jsonl"), "--factor", "m", "--out",
        &p("m.tsv"), "--plot", &p("m.png"),
    ]);
    let out = ok(&["predict", "--ckpt", &p("ckpt"), "--text", "mhate_1 sexp_2 tgt0_1 plat0_1 fill_3"]);
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            files(&path, base, out);
        } else {
            out.push((path.strip_prefix(base).unwrap().display().to_string(), fs::read(&path).unwrap()));
        }
    }
}

#[test]
fn end_to_end_pipeline_is_valid_and_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let predict_a = pipeline(a.path());
    let root = a.path();

    for name in ["corpus.jsonl", "truth.jsonl", "spec.json", "train.jsonl", "val.jsonl", "test.jsonl"] {
        assert!(root.join("data").join(name).exists(), "{name}");
    }
    for name in ["manifest.json", "metrics.jsonl", "loss_curve.png", "encoder.safetensors", "decoder.safetensors"] {
        assert!(root.join("ckpt").join(name).exists(), "{name}");
    }
    let manifest = json(&root.join("ckpt/manifest.json"));
    assert_eq!(manifest["rng_seed"], 5);
    assert!(manifest["best_val_macro_f1"].is_number());

    let transfer = json(&root.join("transfer.json"));
    assert_eq!(transfer["source_style"], "explicit");
    assert_eq!(transfer["target_style"], "implicit");
    assert_eq!(transfer["runs"].as_array().unwrap().len(), 1);
    for key in ["precision", "recall", "macro_f1"] {
        assert!(transfer["mean"][key].as_f64().unwrap().is_finite());
    }

    let ablate = json(&root.join("ablate.json"));
    assert_eq!(ablate["rows"][0]["disabled"], serde_json::json!(["cf", "cycle"]));
    assert!(ablate["rows"][0]["delta"]["macro_f1"].is_number());

    let tsv = fs::read_to_string(root.join("m.tsv")).unwrap();
    let test_rows = fs::read_to_string(root.join("data/test.jsonl")).unwrap().lines().count();
    let mut lines = tsv.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(&header[..4], ["id", "label", "style", "v0"]);
    assert_eq!(lines.count(), test_rows);
    assert_eq!(&fs::read(root.join("m.png")).unwrap()[1..4], b"PNG");

    let readout: Value = serde_json::from_str(&predict_a).unwrap();
    assert!(readout["hate_prob"].as_f64().unwrap() >= 0.0);
    let style_sum: f64 = readout["style_probs"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((style_sum - 1.0).abs() < 1e-6);
    assert!(readout["target_probs"].as_object().unwrap().len() >= 2);

    let predict_b = pipeline(b.path());
    assert_eq!(predict_a, predict_b);
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    files(a.path(), a.path(), &mut fa);
    files(b.path(), b.path(), &mut fb);
    assert_eq!(fa.len(), fb.len());
    for ((na, ca), (nb, cb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ca == cb, "{na} differs between runs");
    }
}

#[test]
fn unknown_loss_name_is_a_usage_error() {
    let out = cadet(&["ablate", "--corpus", "c.jsonl", "--disable", "cf,bogus", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["task", "target", "style", "orth", "adv", "rec", "cf", "cycle", "KL"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(cadet(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cadet(&[]).status.code(), Some(1));
    assert_eq!(cadet(&["predict", "--ckpt", "x"]).status.code(), Some(1));
    assert_eq!(cadet(&["export-latents", "--ckpt", "c", "--corpus", "d", "--factor", "q", "--out", "o"]).status.code(), Some(1));
    assert_eq!(cadet(&["--help"]).status.code(), Some(0));
    for sub in ["synth", "train", "transfer", "ablate", "export-latents", "predict"] {
        assert_eq!(cadet(&[sub, "--help"]).status.code(), Some(0), "{sub}");
    }
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = cadet(&["predict", "--ckpt", missing.to_str().unwrap(), "--text", "hello"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));
}

#[test]
fn config_path_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let mut config = Config::toy();
    config.train.max_epochs = 1;
    config.latent.dim_m = 12;
    fs::write(p("env.toml"), config.to_toml()).unwrap();
    ok(&["synth", "--n", "120", "--out", &p("data")]);
    let out = Command::new(env!("CARGO_BIN_EXE_cadet"))
        .args(["train", "--train", &p("data/train.jsonl"), "--val", &p("data/val.jsonl"), "--out", &p("ckpt")])
        .env("CADET_CONFIG", p("env.toml"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&dir.path().join("ckpt/manifest.json"));
    assert_eq!(manifest["config"]["latent"]["dim_m"], 12);
    assert_eq!(manifest["history"].as_array().unwrap().len(), 1);
}
