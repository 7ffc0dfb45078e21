use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--nodes", "90", "--layers", "2", "--avg-degree", "6", "--max-degree", "10", "--communities", "3",
    "--dim", "8", "--walks-per-node", "3", "--walk-length", "12", "--window", "3", "--epochs", "5",
    "--ffn-dim", "8", "--kappa", "3", "--trials", "2", "--seed", "4",
];

fn ldga(args: &[&str], extra: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ldga"))
        .args(args)
        .args(extra)
        .env("RUST_LOG", "warn")
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "ldga {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_train_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    ldga(&["generate", "--out", s(&data)], TINY);
    for file in ["manifest.json", "labels.txt", "layers/layer_0.txt", "layers/layer_1.txt"] {
        assert!(data.join(file).exists(), "{file}");
    }

    let graph = data.join("layers");
    let labels = data.join("labels.txt");
    let source = ["--graph", s(&graph), "--truth", s(&labels)];
    let train_args = [&source[..], &["--output-dir", s(&out)]].concat();
    ldga(&[&["train"], &train_args[..]].concat(), TINY);
    for file in ["train.json", "train.csv", "train_best_labels.txt", "best_model.ckpt", "best_model.json", "best_history.json"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let history: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("best_history.json")).unwrap()).unwrap();
    assert_eq!(history.as_array().unwrap().len(), 5);

    let eval = ldga(&[&["eval", "--labels", s(&labels)], &source[..]].concat(), TINY);
    let scores: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(scores["nmi"], 1.0);
    assert_eq!(scores["nonempty_communities"], 3);

    let report = ldga(&["report", s(&out.join("train.json"))], &[]);
    assert!(String::from_utf8_lossy(&report.stdout).contains("2 trials"));
}

#[test]
fn report_detects_tampered_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ldga(&["baseline", "--output-dir", s(&out)], TINY);
    let csv = out.join("baseline.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.truncate(lines.len() - 1);
    fs::write(&csv, lines.join("\n") + "\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_ldga"))
        .args(["report", s(&out.join("baseline.json"))])
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap()
        .status;
    assert!(!status.success());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "nodes = 90\nlayers = 3\ncommunities = \"3\"\navg_degree = 6\nmax_degree = 10\n").unwrap();
    let data = dir.path().join("data");
    ldga(&["--config", s(&config), "generate", "--out", s(&data), "--layers", "2"], &[]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["dataset"]["num_layers"], 2);
    assert_eq!(manifest["dataset"]["num_nodes"], 90);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "nodez = 90\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ldga"))
        .args(["--config", s(&config), "generate", "--out", s(&dir.path().join("x"))])
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nodez"));
}
