use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use epigate_core::data::gaussian_blobs;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_epigate"));
    c.env_remove("EPIGATE_DATA_DIR").arg("--jobs").arg("1");
    c
}

/// Blob dataset as CSV plus a schema pointing at it.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let ds = gaussian_blobs(300, 3, 2, 2.0, 5).unwrap();
    let csv = dir.join("blobs.csv");
    let mut text = String::from("a,b,c,label\n");
    for (row, y) in ds.features.rows().into_iter().zip(&ds.labels) {
        text += &format!("{},{},{},{}\n", row[0], row[1], row[2], y);
    }
    std::fs::write(&csv, text).unwrap();
    let schema = dir.join("blobs.toml");
    std::fs::write(
        &schema,
        "name = \"blobs\"\nfeature_names = [\"a\", \"b\", \"c\"]\nn_classes = 2\nfiles = [\"blobs.csv\"]\n",
    )
    .unwrap();
    (csv, schema)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn train(dir: &Path, schema: &Path, csv: &Path, out: &str, model: &str) -> PathBuf {
    let cfg = dir.join("train.toml");
    std::fs::write(&cfg, "[forest]\nn_trees = 10\n[mlp]\nmax_epochs = 5\nhidden = [8]\n").unwrap();
    let o = run(bin()
        .args(["train", "--model", model, "--seed", "7", "--config"])
        .arg(&cfg)
        .arg("--schema")
        .arg(schema)
        .arg("--data")
        .arg(csv)
        .arg("--out")
        .arg(dir.join(out)));
    assert!(o.status.success());
    dir.join(out)
}

#[test]
fn train_is_byte_identical_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (csv, schema) = fixture(tmp.path());
    let a = train(tmp.path(), &schema, &csv, "a", "rf");
    let b = train(tmp.path(), &schema, &csv, "b", "rf");
    let ma = std::fs::read(a.join("model.json")).unwrap();
    assert_eq!(ma, std::fs::read(b.join("model.json")).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["command"], "train");
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|o| o == "model.json"));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["test_f1"].as_f64().unwrap() > 0.8);
}

#[test]
fn explain_records_model_evals() {
    let tmp = tempfile::tempdir().unwrap();
    let (csv, schema) = fixture(tmp.path());
    let m = train(tmp.path(), &schema, &csv, "m", "lr");
    let o = run(bin()
        .args(["explain", "--method", "kernel_shap", "--background", "20", "--limit", "5"])
        .arg("--model-file")
        .arg(m.join("model.json"))
        .arg("--data")
        .arg(&csv)
        .arg("--out")
        .arg(tmp.path().join("x")));
    assert!(o.status.success());
    let text = std::fs::read_to_string(tmp.path().join("x/attributions.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("row,target,method,model_evals"));
    for l in &lines[1..] {
        let evals: usize = l.split(',').nth(3).unwrap().parse().unwrap();
        assert!(evals > 0);
    }
    assert!(tmp.path().join("x/manifest.json").exists());
}

#[test]
fn uncertainty_and_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let (csv, schema) = fixture(tmp.path());
    let m = train(tmp.path(), &schema, &csv, "m", "rf");
    let o = run(bin()
        .arg("uncertainty")
        .arg("--model-file")
        .arg(m.join("model.json"))
        .arg("--data")
        .arg(&csv)
        .arg("--out")
        .arg(tmp.path().join("u")));
    assert!(o.status.success());
    assert!(tmp.path().join("u/epistemic.csv").exists());
    let o = run(bin()
        .args(["gate", "--nu", "0.5", "--explain-evals", "1000"])
        .arg("--model-file")
        .arg(m.join("model.json"))
        .arg("--data")
        .arg(&csv)
        .arg("--out")
        .arg(tmp.path().join("g")));
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("g/gate.json")).unwrap()).unwrap();
    let q = report["q"].as_f64().unwrap();
    assert!((q - (1.0 / 1000.0 + 0.5)).abs() < 1e-12);
}

#[test]
fn table3_emits_every_deferral_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, schema) = fixture(tmp.path());
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "n_samples = 15\nversions = 1\nsigmas = [0.1, 0.3]\nbackground_size = 10\n[training.forest]\nn_trees = 8\n",
    )
    .unwrap();
    let o = run(bin()
        .args(["experiment", "--name", "table3", "--seed", "3"])
        .arg("--schema")
        .arg(&schema)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("t3"))
        .env("EPIGATE_DATA_DIR", tmp.path()));
    assert!(o.status.success());
    let text = std::fs::read_to_string(tmp.path().join("t3/tab3_pr.csv")).unwrap();
    let nus: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(nus, vec![0.9, 0.7, 0.5, 0.3, 0.1]);
    for f in ["report.json", "tab4_cost.csv", "figB_scatter.csv", "manifest.json"] {
        assert!(tmp.path().join("t3").join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("t3/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 3);
    assert_eq!(report["config"]["n_samples"], 15);
}

#[test]
fn oracle_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(bin().arg("oracle-check").arg("--out").arg(tmp.path()));
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("all 9 oracle checks passed"), "{stdout}");
    assert!(tmp.path().join("oracle.json").exists());
}

#[test]
fn exit_codes_and_error_records() {
    let tmp = tempfile::tempdir().unwrap();
    let (csv, schema) = fixture(tmp.path());
    // usage error from argument parsing
    let o = bin().args(["train", "--model", "svm"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    // malformed config
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "forest = [").unwrap();
    let o = bin()
        .args(["train", "--model", "rf", "--config"])
        .arg(&bad)
        .arg("--schema")
        .arg(&schema)
        .arg("--data")
        .arg(&csv)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    // unknown method is a usage error
    let m = train(tmp.path(), &schema, &csv, "m", "rf");
    let o = bin()
        .args(["explain", "--method", "magic"])
        .arg("--model-file")
        .arg(m.join("model.json"))
        .arg("--data")
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    // missing files are runtime failures
    let o = bin()
        .args(["uncertainty", "--model-file"])
        .arg(tmp.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "missing_file");
}
