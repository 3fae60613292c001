mod common;

use std::process::{Command, Output};

use serde_json::Value;

fn veracity(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veracity"))
        .args(args)
        .current_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn field(text: &str, prefix: &str) -> Vec<f64> {
    let line = text
        .lines()
        .find(|l| l.starts_with(prefix))
        .unwrap_or_else(|| panic!("no {prefix:?} line in\n{text}"));
    line[prefix.len()..]
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect()
}

#[test]
fn ingest_reports_counts() {
    let out = veracity(&["ingest", "data/mini_corpus.jsonl"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["items"], 240);
    assert_eq!(v["fake"].as_u64().unwrap() + v["true"].as_u64().unwrap(), 240);
    assert_eq!(v["split"]["train"], 192);
    assert_eq!(v["split"]["val"], 24);
    assert_eq!(v["split"]["test"], 24);
}

#[test]
fn usage_errors_exit_nonzero() {
    let out = veracity(&["train", "data/mini_corpus.jsonl", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = veracity(&["explain", "missing.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--statement"));

    let out = veracity(&["eval", "no-such-bundle.json", "data/mini_corpus.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = veracity(&["ingest", "no-such-corpus.jsonl"]);
    assert!(!out.status.success());
}

#[test]
fn explain_and_eval_on_saved_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.json");
    common::tiny_outcome().bundle.save(&path).unwrap();
    let bundle = path.to_str().unwrap();

    let out = veracity(&[
        "explain",
        bundle,
        "--statement",
        "Obama invited Russia to rig the elections!",
        "--speaker",
        "Marcus Lyle",
        "--corpus",
        "data/mini_corpus.jsonl",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(!v["mimic"]["supports"].as_array().unwrap().is_empty());

    let out = veracity(&["explain", bundle, "--statement", "  "]);
    assert!(!out.status.success());

    let out = veracity(&["eval", bundle, "data/mini_corpus.jsonl"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let acc = [
        field(&text, "mimic accuracy:")[0],
        field(&text, "attn accuracy:")[0],
        field(&text, "pert accuracy:")[0],
    ];
    assert!(field(&text, "items:")[0] == 24.0);
    if acc.iter().all(|&a| a > 0.0) {
        let derived = field(&text, "derived weights:");
        let total: f64 = acc.iter().sum();
        for (w, a) in derived.iter().zip(acc) {
            assert!((w - a / total).abs() < 1e-3, "{w} vs {}", a / total);
        }
    }

    let out = veracity(&["eval", bundle, "data/mini_corpus.jsonl", "--all", "--json"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["n_items"], 240);
}

#[test]
fn truncated_bundle_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.json");
    std::fs::write(&path, br#"{"format_version": 1, "corpus_fingerprint": "ab"#).unwrap();
    let out = veracity(&["explain", path.to_str().unwrap(), "--statement", "hi"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated"));
}
