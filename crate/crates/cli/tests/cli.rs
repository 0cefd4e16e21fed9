//! End-to-end runs of the `aeon` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn aeon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aeon"))
        .args(args)
        .env_remove("AEON_ENDPOINT")
        .output()
        .expect("spawn aeon")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn stdout_lines(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn record(
    id: &str,
    task: &str,
    original: &str,
    generated: &str,
    human: Option<(f64, f64)>,
) -> Value {
    let mut r = json!({
        "id": id,
        "task": task,
        "original": original,
        "generated": generated,
        "original_label": "positive",
    });
    if let Some((c, n)) = human {
        r["human"] = json!({
            "consistency": c,
            "naturalness": n,
            "human_label": "positive",
            "difficulty": 2.0,
        });
    }
    r
}

fn write_jsonl(dir: &TempDir, name: &str, rows: &[Value]) -> PathBuf {
    let path = dir.path().join(name);
    let body: String = rows.iter().map(|r| format!("{r}\n")).collect();
    fs::write(&path, body).unwrap();
    path
}

/// Scored line with hand-set scores, for the commands that only read them.
fn scored(id: &str, task: &str, sem: f64, nat: f64, human: Option<(f64, f64)>) -> Value {
    let mut r = record(id, task, "a b c", "a x c", human);
    r["sem"] = json!({
        "value": sem, "min_sim": sem, "avg_sim": sem, "text_sim": sem,
        "patch_sims": [sem], "lambda1": 0.1, "lambda2": 0.2,
    });
    r["nat"] = json!({
        "value": nat, "min_nat": nat, "avg_nat": nat, "token_probs": [nat, nat, nat],
        "phi": 0.6, "aggregation": "arithmetic",
    });
    r["config"] = json!({
        "lambda1": 0.1, "lambda2": 0.2, "phi": 0.6, "patch_radius": 2,
        "aggregation": "arithmetic",
        "thresholds": {"semantic": {"SA": 0.87, "NLI": 0.90, "SE": 0.91}, "naturalness": 0.21},
        "rank_key": "mean",
        "backend": {"kind": "reference", "seed": 42, "dim": 64},
    });
    r
}

#[test]
fn help_exits_zero() {
    let out = aeon(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["score", "evaluate", "select", "rank", "summarize"] {
        assert!(text.contains(cmd), "{text}");
    }
}

#[test]
fn score_single_record() {
    let dir = TempDir::new().unwrap();
    let corpus = write_jsonl(
        &dir,
        "c.jsonl",
        &[record("r1", "SA", "a fine film", "a fine movie", None)],
    );
    let out = aeon(&["score", corpus.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 1);
    let l = &lines[0];
    assert_eq!(l["id"], "r1");
    assert_eq!(l["original"], "a fine film");
    let sem = l["sem"]["value"].as_f64().unwrap();
    assert!(sem > 0.0 && sem < 1.0);
    assert_eq!(l["nat"]["token_probs"].as_array().unwrap().len(), 3);
    assert_eq!(l["config"]["backend"]["kind"], "reference");
}

#[test]
fn out_flag_writes_file() {
    let dir = TempDir::new().unwrap();
    let corpus = write_jsonl(
        &dir,
        "c.jsonl",
        &[record("r1", "SE", "same text", "same text", None)],
    );
    let dest = dir.path().join("scored.jsonl");
    let out = aeon(&[
        "score",
        corpus.to_str().unwrap(),
        "--out",
        dest.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(fs::read_to_string(dest).unwrap().trim()).unwrap();
    assert_eq!(v["sem"]["value"], 1.0);
}

#[test]
fn malformed_line_is_partial() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("c.jsonl");
    let good = record("r1", "SA", "good film", "good movie", None);
    let other = record("r3", "NLI", "a cat sits", "a dog sits", None);
    fs::write(
        &path,
        format!("{good}\n{{\"id\": \"r2\", \"task\": \"SA\"}}\n{other}\n"),
    )
    .unwrap();
    let out = aeon(&["score", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let ids: Vec<Value> = stdout_lines(&out).iter().map(|l| l["id"].clone()).collect();
    assert_eq!(ids, [json!("r1"), json!("r3")]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2") && err.contains("original"), "{err}");
}

#[test]
fn failed_record_is_partial() {
    let dir = TempDir::new().unwrap();
    let corpus = write_jsonl(
        &dir,
        "c.jsonl",
        &[
            record("r1", "SA", "fine", "fine", None),
            record("r2", "SA", "fine", "   ", None),
        ],
    );
    let out = aeon(&["score", corpus.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_lines(&out).len(), 1);
    assert!(String::from_utf8(out.stderr).unwrap().contains("r2"));
}

#[test]
fn invalid_weights_are_fatal() {
    let dir = TempDir::new().unwrap();
    let corpus = write_jsonl(&dir, "c.jsonl", &[record("r1", "SA", "a", "b", None)]);
    let out = aeon(&[
        "score",
        corpus.to_str().unwrap(),
        "--lambda1",
        "0.7",
        "--lambda2",
        "0.6",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn unreachable_remote_is_fatal() {
    let dir = TempDir::new().unwrap();
    let corpus = write_jsonl(&dir, "c.jsonl", &[record("r1", "SA", "a", "b", None)]);
    let out = aeon(&[
        "score",
        corpus.to_str().unwrap(),
        "--backend",
        "remote",
        "--endpoint",
        "http://127.0.0.1:1",
        "--timeout-ms",
        "2000",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("127.0.0.1:1"));
}

#[test]
fn remote_without_endpoint_is_fatal() {
    let dir = TempDir::new().unwrap();
    let corpus = write_jsonl(&dir, "c.jsonl", &[record("r1", "SA", "a", "b", None)]);
    let out = aeon(&["score", corpus.to_str().unwrap(), "--backend", "remote"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("AEON_ENDPOINT"));
}

#[test]
fn evaluate_perfect_separation() {
    let dir = TempDir::new().unwrap();
    let rows = [
        scored("a", "SA", 0.95, 0.5, Some((4.5, 4.0))),
        scored("b", "SA", 0.90, 0.5, Some((3.0, 4.0))),
        scored("c", "SA", 0.60, 0.5, Some((2.0, 4.0))),
        scored("d", "SA", 0.40, 0.5, Some((1.0, 4.0))),
    ];
    let path = write_jsonl(&dir, "s.jsonl", &rows);
    let out = aeon(&["evaluate", path.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = &stdout_lines(&out)[0];
    assert_eq!(report["ap"], 1.0);
    assert_eq!(report["auc"], 1.0);
    assert_eq!(report["n_items"], 4);
    assert_eq!(report["n_positive"], 2);
}

#[test]
fn evaluate_naturalness_target() {
    let dir = TempDir::new().unwrap();
    let rows = [
        scored("a", "SA", 0.5, 0.2, Some((4.0, 2.0))),
        scored("b", "SA", 0.5, 0.6, Some((4.0, 4.0))),
        scored("c", "SA", 0.5, 0.4, Some((4.0, 1.5))),
    ];
    let path = write_jsonl(&dir, "s.jsonl", &rows);
    let out = aeon(&[
        "evaluate",
        path.to_str().unwrap(),
        "--target",
        "naturalness",
    ]);
    assert!(out.status.success());
    let report = &stdout_lines(&out)[0];
    assert_eq!(report["auc"], 1.0);
    assert_eq!(report["n_positive"], 1);
}

#[test]
fn evaluate_missing_annotation() {
    let dir = TempDir::new().unwrap();
    let rows = [
        scored("a", "SA", 0.9, 0.5, Some((4.0, 4.0))),
        scored("b", "SA", 0.5, 0.5, None),
    ];
    let path = write_jsonl(&dir, "s.jsonl", &rows);
    let out = aeon(&["evaluate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("\"b\"") && err.contains("human"), "{err}");
}

#[test]
fn evaluate_single_class_is_fatal() {
    let dir = TempDir::new().unwrap();
    let rows = [
        scored("a", "SA", 0.9, 0.5, Some((4.0, 4.0))),
        scored("b", "SA", 0.5, 0.5, Some((3.5, 4.0))),
    ];
    let path = write_jsonl(&dir, "s.jsonl", &rows);
    assert_eq!(
        aeon(&["evaluate", path.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn select_thresholds() {
    let dir = TempDir::new().unwrap();
    let rows = [
        scored("sa", "SA", 0.88, 0.30, None),
        scored("sa_low", "SA", 0.86, 0.30, None),
        scored("nli", "NLI", 0.90, 0.21, None),
        scored("se", "SE", 0.905, 0.50, None),
        scored("nat_low", "SE", 0.99, 0.20, None),
    ];
    let path = write_jsonl(&dir, "s.jsonl", &rows);
    let out = aeon(&["select", path.to_str().unwrap()]);
    assert!(out.status.success());
    let ids: Vec<Value> = stdout_lines(&out).iter().map(|l| l["id"].clone()).collect();
    assert_eq!(ids, [json!("sa"), json!("nli")]);

    let out = aeon(&[
        "select",
        path.to_str().unwrap(),
        "--threshold-sa",
        "0.85",
        "--threshold-se",
        "0.9",
    ]);
    let ids: Vec<Value> = stdout_lines(&out).iter().map(|l| l["id"].clone()).collect();
    assert_eq!(
        ids,
        [json!("sa"), json!("sa_low"), json!("nli"), json!("se")]
    );
}

#[test]
fn select_passes_lines_through_verbatim() {
    let scored_path = fixture("golden_scored.jsonl");
    let out = aeon(&[
        "select",
        scored_path.to_str().unwrap(),
        "--threshold-sa",
        "0",
        "--threshold-nli",
        "0",
        "--threshold-se",
        "0",
        "--threshold-nat",
        "0",
    ]);
    assert!(out.status.success());
    assert_eq!(out.stdout, fs::read(scored_path).unwrap());
}

#[test]
fn rank_order() {
    let dir = TempDir::new().unwrap();
    let rows = [
        scored("a", "SA", 0.9, 0.1, None),
        scored("b", "SA", 0.5, 0.9, None),
        scored("c", "SA", 0.7, 0.3, None),
        scored("d", "SA", 0.6, 0.4, None),
    ];
    let path = write_jsonl(&dir, "s.jsonl", &rows);
    let ids = |key: &str| -> Vec<String> {
        let out = aeon(&["rank", path.to_str().unwrap(), "--rank-key", key]);
        assert!(out.status.success());
        stdout_lines(&out)
            .iter()
            .map(|l| l["id"].as_str().unwrap().to_owned())
            .collect()
    };
    assert_eq!(ids("semantic"), ["a", "c", "d", "b"]);
    assert_eq!(ids("naturalness"), ["b", "d", "c", "a"]);
    // means 0.5, 0.7, 0.5, 0.5: ties keep input order
    assert_eq!(ids("mean"), ["b", "a", "c", "d"]);
}

#[test]
fn summarize_human_and_automatic() {
    let dir = TempDir::new().unwrap();
    let rows = [
        scored("a", "SA", 0.95, 0.5, Some((4.0, 4.0))),
        scored("b", "SA", 0.95, 0.1, Some((2.0, 4.0))),
        scored("c", "NLI", 0.50, 0.1, Some((2.0, 2.0))),
        scored("d", "SE", 0.50, 0.5, Some((4.0, 2.5))),
    ];
    let path = write_jsonl(&dir, "s.jsonl", &rows);

    let out = aeon(&["summarize", path.to_str().unwrap()]);
    assert!(out.status.success());
    let r = &stdout_lines(&out)[0];
    assert_eq!(r["total"], 4);
    assert_eq!(r["inconsistent"]["count"], 2);
    assert_eq!(r["unnatural"]["count"], 2);
    assert_eq!(r["both"]["count"], 1);
    assert_eq!(r["neither"]["fraction"], 0.25);

    let out = aeon(&["summarize", path.to_str().unwrap(), "--source", "automatic"]);
    assert!(out.status.success());
    let r = &stdout_lines(&out)[0];
    assert_eq!(r["inconsistent"]["count"], 2);
    assert_eq!(r["unnatural"]["count"], 2);
    assert_eq!(r["both"]["count"], 1);
    assert_eq!(r["inconsistent_only"]["count"], 1);
    assert_eq!(r["unnatural_only"]["count"], 1);
}

#[test]
fn summarize_reads_plain_corpus() {
    let out = aeon(&[
        "summarize",
        fixture("golden_corpus.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "g06 has no annotation");
    assert!(String::from_utf8(out.stderr).unwrap().contains("g06"));
}

#[test]
fn golden_corpus_is_stable() {
    let out = aeon(&[
        "score",
        fixture("golden_corpus.jsonl").to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(out.status.success());
    assert_eq!(
        out.stdout,
        fs::read(fixture("golden_scored.jsonl")).unwrap()
    );
}
