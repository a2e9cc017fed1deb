use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    workspace().join("configs").join(name)
}

fn rpn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpn"))
        .args(args)
        .current_dir(workspace())
        .output()
        .unwrap()
}

fn last_line(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("a JSON line on stdout")).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(rpn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rpn(&["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_usage_error_naming_the_file() {
    let out = rpn(&["train", "--config", "no/such/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    let line = last_line(&out);
    assert_eq!(line["ok"], false);
    assert!(line["error"].as_str().unwrap().contains("config.json"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpn(&[
        "train",
        "--config",
        p(&config("synthetic_nwpn.json")),
        "--out",
        p(dir.path()),
        "--set",
        "train.speed=3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_run_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpn(&[
        "train",
        "--config",
        p(&config("synthetic_nwpn.json")),
        "--out",
        p(dir.path()),
        "--set",
        "train.adam.lr=1000",
        "--set",
        "train.epochs=50",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let line = last_line(&out);
    assert!(line["error"].as_str().unwrap().contains("diverged"), "{line}");
}

#[test]
fn distillation_without_teacher_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpn(&[
        "train",
        "--config",
        p(&config("synthetic_endd.json")),
        "--out",
        p(dir.path()),
        "--set",
        "distill.teacher_dir=null",
        "--set",
        "train.epochs=2",
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert_eq!(last_line(&out)["ok"], false);
}

#[test]
fn training_is_reproducible_and_eval_matches() {
    let root = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let dir = root.path().join(name);
        let out = rpn(&[
            "train",
            "--config",
            p(&config("synthetic_nwpn.json")),
            "--out",
            p(&dir),
            "--seed",
            "4",
            "--set",
            "train.epochs=15",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (dir, last_line(&out))
    };
    let (dir, first) = run("a");
    let (_, second) = run("b");
    assert_eq!(first["metrics"], second["metrics"]);
    let files = |d: &Path| -> Value {
        let m: Value = serde_json::from_str(&std::fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
        m["files"].clone()
    };
    let hashes_a = files(&dir);
    let hashes_b = files(&root.path().join("b"));
    assert_eq!(hashes_a["checkpoint.json"], hashes_b["checkpoint.json"]);
    assert_eq!(hashes_a["grid.csv"], hashes_b["grid.csv"]);

    let out = rpn(&["eval", "--out", p(&dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let eval = last_line(&out);
    for key in [
        "knowledge_ratio_right",
        "data_variance_argmax",
        "knowledge_in_domain",
        "train_nll",
    ] {
        assert_eq!(eval["metrics"][key], first["metrics"][key], "{key}");
    }
    assert!(dir.join("eval").join("grid.csv").exists());

    let out = rpn(&["export-curves", "--out", p(&dir)]);
    assert_eq!(out.status.code(), Some(0));
    let curve = std::fs::read_to_string(dir.join("curves/uncertainty_vs_x.csv")).unwrap();
    assert_eq!(
        curve.lines().next().unwrap(),
        "x,mean,total_variance,data_variance,knowledge_variance"
    );
    assert_eq!(curve.lines().count(), 602);
}

#[test]
fn gen_data_writes_synthetic_sets() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpn(&[
        "gen-data",
        "--config",
        p(&config("synthetic_nwpn.json")),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let line = last_line(&out);
    assert_eq!(line["metrics"]["train_rows"], 2048);
    assert_eq!(line["metrics"]["ood_rows"], 512);
    let csv = std::fs::read_to_string(dir.path().join("train.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2049);
}

#[test]
fn fa_ood_samples_in_original_units() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpn(&[
        "fa-ood",
        "--config",
        p(&config("wine_single.json")),
        "--out",
        p(dir.path()),
        "--samples",
        "200",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let line = last_line(&out);
    assert_eq!(line["metrics"]["rows"], 200);
    assert!(dir.path().join("fa_model.json").exists());
    let csv = std::fs::read_to_string(dir.path().join("fa_ood.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
}

#[test]
fn verify_rejects_too_few_samples() {
    let out = rpn(&["verify", "--samples", "10"]);
    assert_ne!(out.status.code(), Some(0));
}
