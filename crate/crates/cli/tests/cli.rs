use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mtree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtree"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mtree(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json_lines(text: &str) -> Vec<Value> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// A fresh scratch directory per test.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mtree-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    ok(&[
        "synth",
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--output",
        s(&path),
    ]);
    path
}

#[test]
fn canonicalize_prints_tree_and_value() {
    let v: Value = serde_json::from_str(&ok(&["canonicalize", "x=(1+2)*3"])).unwrap();
    assert_eq!(v["mtree"], "(+ (*@1 1 3) (*@2 2 3))");
    assert_eq!(v["value"], 9.0);

    let v: Value = serde_json::from_str(&ok(&["canonicalize", "x=5*2/(1+3)-8"])).unwrap();
    assert_eq!(v["value"], -5.5);
    let commuted: Value = serde_json::from_str(&ok(&["canonicalize", "x=-8+2*5/(3+1)"])).unwrap();
    assert_eq!(v["mtree"], commuted["mtree"]);
}

#[test]
fn bad_expressions_exit_2_with_a_json_error() {
    let out = mtree(&["canonicalize", "x=(1+"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().find(|l| l.starts_with('{')).unwrap();
    let v: Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["error"], "ParseError");
    assert_eq!(v["input"], "x=(1+");
}

#[test]
fn unknown_flags_exit_2() {
    assert_eq!(mtree(&["encode", "--bogus"]).status.code(), Some(2));
    assert_eq!(mtree(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn encode_then_decode_recovers_every_answer() {
    let dir = scratch("roundtrip");
    let corpus = synth(&dir, 200, 3);
    let codes = dir.join("codes.jsonl");
    ok(&[
        "encode",
        "--input",
        s(&corpus),
        "--format",
        "synthetic",
        "--output",
        s(&codes),
    ]);
    let decoded = json_lines(&ok(&["decode", "--input", s(&codes)]));
    let gold = json_lines(&fs::read_to_string(&corpus).unwrap());
    assert_eq!(decoded.len(), gold.len());
    for (d, g) in decoded.iter().zip(&gold) {
        assert_eq!(d["id"], g["id"]);
        let (a, b) = (d["answer"].as_f64().unwrap(), g["ans"].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0), "{d} vs {g}");
    }
}

#[test]
fn worked_example_codes_come_out_of_encode() {
    let dir = scratch("worked");
    let corpus = dir.join("one.json");
    fs::write(
        &corpus,
        r#"[{"id": "w", "text": "5 boxes of 2 pens go to 1 boy and 3 girls , then 8 are lost .",
             "equation": "x=5*2/(1+3)-8", "ans": -5.5}]"#,
    )
    .unwrap();
    let out = json_lines(&ok(&["encode", "--input", s(&corpus), "--format", "mawps"]));
    let codes = &out[0]["codes"];
    // Constants 1 and pi come first, then the text's numbers in order.
    assert_eq!(codes[1], serde_json::json!(["None"]));
    assert_eq!(codes[6], serde_json::json!(["1_0_+"]));
    for i in [4, 5] {
        let c = codes[i][0].as_str().unwrap();
        assert!(c.ends_with("_+_×_+/"), "{c}");
    }
}

#[test]
fn decode_reports_empty_trees() {
    let dir = scratch("empty");
    let path = dir.join("codes.jsonl");
    fs::write(
        &path,
        r#"{"id": "z", "values": [1.0, 3.14, 2.0], "codes": [["None"], ["None"], ["None"]]}"#,
    )
    .unwrap();
    let out = json_lines(&ok(&["decode", "--input", s(&path)]));
    assert_eq!(out[0]["error"], "EmptyTree");
}

#[test]
fn stats_report_full_coverage_on_synthetic_data() {
    let dir = scratch("stats");
    let corpus = synth(&dir, 100, 4);
    let v: Value = serde_json::from_str(&ok(&[
        "stats",
        "--input",
        s(&corpus),
        "--format",
        "synthetic",
    ]))
    .unwrap();
    assert_eq!(v["coverage_pct"], 100.0);
    assert_eq!(v["train_size"], 100);
    assert_eq!(v["dropped"], 0);
}

#[test]
fn preprocess_writes_the_split_files() {
    let dir = scratch("preprocess");
    let corpus = synth(&dir, 30, 5);
    let out = dir.join("out");
    ok(&[
        "preprocess",
        "--input",
        s(&corpus),
        "--format",
        "synthetic",
        "--output",
        s(&out),
        "--folds",
        "3",
    ]);
    for f in ["train.jsonl", "vocab.json", "stats.json", "folds.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(
        json_lines(&fs::read_to_string(out.join("train.jsonl")).unwrap()).len(),
        30
    );
}

fn train_args<'a>(corpus: &'a str, model: &'a str, log: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--input",
        corpus,
        "--format",
        "synthetic",
        "--output",
        model,
        "--log-output",
        log,
        "--seed",
        "7",
        "--epochs",
        "3",
        "--embedding-dim",
        "8",
        "--hidden-dim",
        "8",
        "--generator-dims",
        "16,16",
    ]
}

#[test]
fn seeded_training_is_reproducible_and_predict_reads_the_checkpoint() {
    let dir = scratch("train");
    let corpus = synth(&dir, 30, 6);
    let (m1, l1) = (dir.join("m1.json"), dir.join("l1.jsonl"));
    let (m2, l2) = (dir.join("m2.json"), dir.join("l2.jsonl"));
    ok(&train_args(s(&corpus), s(&m1), s(&l1)));
    ok(&train_args(s(&corpus), s(&m2), s(&l2)));
    assert_eq!(fs::read(&l1).unwrap(), fs::read(&l2).unwrap());
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());
    assert_eq!(json_lines(&fs::read_to_string(&l1).unwrap()).len(), 3);

    let preds = dir.join("preds.jsonl");
    let summary: Value = serde_json::from_str(&ok(&[
        "predict",
        "--input",
        s(&corpus),
        "--format",
        "synthetic",
        "--checkpoint",
        s(&m1),
        "--output",
        s(&preds),
    ]))
    .unwrap();
    assert_eq!(summary["total"], 30);
    let lines = json_lines(&fs::read_to_string(&preds).unwrap());
    let correct = lines.iter().filter(|l| l["correct"] == true).count();
    assert_eq!(summary["correct"], correct);
}

#[test]
fn a_missing_checkpoint_is_an_input_error() {
    let dir = scratch("missing");
    let corpus = synth(&dir, 3, 8);
    let out = mtree(&[
        "predict",
        "--input",
        s(&corpus),
        "--format",
        "synthetic",
        "--checkpoint",
        s(&dir.join("nope.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = scratch("config");
    let corpus = synth(&dir, 10, 9);
    let cfg = dir.join("cfg.json");
    fs::write(
        &cfg,
        r#"{"training": {"epochs": 1, "seed": 5},
            "model": {"embedding_dim": 4, "hidden_dim": 4, "generator_dims": [8, 8]}}"#,
    )
    .unwrap();
    let (model, log) = (dir.join("m.json"), dir.join("log.jsonl"));
    ok(&[
        "--config",
        s(&cfg),
        "train",
        "--input",
        s(&corpus),
        "--format",
        "synthetic",
        "--output",
        s(&model),
        "--log-output",
        s(&log),
        "--epochs",
        "2",
        "--hidden-dim",
        "6",
    ]);
    assert_eq!(json_lines(&fs::read_to_string(&log).unwrap()).len(), 2);
    let ck: Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(ck["model"]["embedding_dim"], 4);
    assert_eq!(ck["model"]["hidden_dim"], 6);
    assert_eq!(ck["training"]["seed"], 5);

    fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    let out = mtree(&[
        "--config",
        s(&cfg),
        "stats",
        "--input",
        s(&corpus),
        "--format",
        "synthetic",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
