//! End-to-end runs of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

fn pntm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pntm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn taskgen_writes_jsonl_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = pntm(
        dir.path(),
        &["taskgen", "--task", "binary_add", "--len", "9", "--count", "5", "--seed", "3", "--out", "c.jsonl"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l["task"] == "binary_add" && l["len"] == 9));

    // same seed, same corpus
    pntm(
        dir.path(),
        &["taskgen", "--task", "binary_add", "--len", "9", "--count", "5", "--seed", "3", "--out", "d.jsonl"],
    );
    assert_eq!(text, std::fs::read_to_string(dir.path().join("d.jsonl")).unwrap());
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pntm(dir.path(), &["train", "--bogus"])), 1);
    assert_eq!(code(&pntm(dir.path(), &["taskgen", "--task", "sorting", "--len", "4", "--out", "x"])), 1);
    assert_eq!(code(&pntm(dir.path(), &["eval", "--model", "missing.ckpt", "--min-len", "1", "--max-len", "2", "--report", "r.json"])), 1);
    assert_eq!(code(&pntm(dir.path(), &["--help"])), 0);
}

#[test]
fn nan_loss_exits_with_two_and_dumps_batch() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"task": "parity", "max_iters": 5, "batch_size": 4, "max_len": 5, "lr": 1e250}"#,
    )
    .unwrap();
    let out = pntm(dir.path(), &["train", "--config", "cfg.json", "--out", "m.ckpt"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let dump: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.ckpt.abort.json")).unwrap()).unwrap();
    assert!(dump["inputs"].is_array());
    assert!(!dir.path().join("m.ckpt").exists());
}

#[test]
fn train_eval_inspect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"task": "reverse", "max_iters": 4, "batch_size": 4, "min_len": 2, "max_len": 6, "seed": 9}"#,
    )
    .unwrap();
    let out = pntm(dir.path(), &["train", "--config", "cfg.json", "--out", "m.ckpt"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(dir.path().join("m.ckpt.metrics.jsonl")).unwrap();
    assert!(metrics.lines().count() >= 2);
    assert!(metrics.contains("splitmix64"));

    let eval = |report: &str| {
        let out = pntm(
            dir.path(),
            &["eval", "--model", "m.ckpt", "--min-len", "3", "--max-len", "5", "--samples", "8", "--report", report],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(dir.path().join(report)).unwrap()
    };
    let first = eval("a.json");
    assert_eq!(first, eval("b.json"), "evaluation is deterministic");
    let rep: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(rep["lengths"].as_array().unwrap().len(), 3);

    let out = pntm(dir.path(), &["inspect", "--model", "m.ckpt", "--input", "abba", "--out", "traces"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let traces = dir.path().join("traces");
    assert!(traces.join("summary.json").exists());
    assert!(traces.join("write_head0_addresses.csv").exists());
    assert!(traces.join("read_head1_vectors.csv").exists());
}

#[test]
fn bench_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = pntm(
        dir.path(),
        &[
            "bench", "--min-exp", "3", "--max-exp", "4", "--batch", "2", "--dim", "16", "--mem", "16", "--warmup", "1",
            "--runs", "2", "--out", "bench.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("bench.csv")).unwrap();
    assert_eq!(rdr.records().count(), 2);
    assert!(dir.path().join("bench.json").exists());
}
