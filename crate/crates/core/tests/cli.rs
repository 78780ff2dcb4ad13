use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pivotgen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pivotgen"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("one line")).expect("json on stdout")
}

fn stdout_line(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

fn error_kind(out: &Output) -> String {
    assert!(!out.status.success());
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).expect("json on stderr");
    assert!(err["message"].as_str().is_some_and(|m| !m.is_empty()));
    err["kind"].as_str().unwrap().to_string()
}

const TINY_TAGGER: &str = r#"
stage = "tagger"
[schedule]
max_epochs = 2
[optimizer]
batch_size = 16
[tagger]
hidden_dim = 8
word_emb_dim = 8
attr_emb_dim = 4
pos_emb_dim = 2
"#;

const TINY_REALIZER: &str = r#"
stage = "realizer"
[schedule]
max_epochs = 1
[optimizer]
batch_size = 16
[realizer]
max_decode_len = 20
[realizer.vanilla]
hidden_dim = 8
emb_dim = 8
"#;

#[test]
fn full_workflow_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("tagger.toml"), TINY_TAGGER).unwrap();
    std::fs::write(d.join("realizer.toml"), TINY_REALIZER).unwrap();

    let s = stdout_json(&pivotgen(d, &["--seed", "4", "synth", "--out", "data", "--samples", "120", "--unlabeled-fraction", "0.5"]));
    assert_eq!(s["parallel"].as_u64().unwrap() + s["unlabeled"].as_u64().unwrap(), 120);

    let cov = stdout_json(&pivotgen(d, &["annotate", "--parallel", "data/parallel.jsonl", "--out", "labels.jsonl"]));
    assert!(cov["mean_selected_tokens"].as_f64().unwrap() > 3.0);
    let annotated = std::fs::read_to_string(d.join("labels.jsonl")).unwrap();
    let gold = std::fs::read_to_string(d.join("data/gold_labels.jsonl")).unwrap();
    assert_eq!(annotated.lines().count(), gold.lines().count());

    let p = stdout_json(&pivotgen(d, &["pseudo", "--unlabeled", "data/unlabeled.txt", "--out", "pseudo.jsonl"]));
    assert!(p["pairs"].as_u64().unwrap() > 0);

    let args = ["--config", "tagger.toml", "train-tagger", "--train", "data/parallel.jsonl", "--out", "ckpt"];
    let t = stdout_line(&pivotgen(d, &args));
    let scores: Vec<f64> = t.split('\t').map(|x| x.parse().unwrap()).collect();
    assert_eq!(scores.len(), 3);
    assert!(scores.iter().all(|s| (0.0..=100.0).contains(s)));
    let log = std::fs::read_to_string(d.join("ckpt/tagger_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let args = [
        "--config",
        "realizer.toml",
        "train-realizer",
        "--train",
        "data/parallel.jsonl",
        "--pseudo",
        "pseudo.jsonl",
        "--out",
        "ckpt",
    ];
    let bleu: f64 = stdout_line(&pivotgen(d, &args)).parse().unwrap();
    assert!((0.0..=100.0).contains(&bleu));
    assert!(d.join("ckpt/realizer.ckpt").exists());

    let args = ["generate", "--tagger", "ckpt/tagger.ckpt", "--realizer", "ckpt/realizer.ckpt", "--tables", "data/parallel.jsonl", "--out", "hyp.txt"];
    let g = stdout_json(&pivotgen(d, &args));
    let hyps = std::fs::read_to_string(d.join("hyp.txt")).unwrap();
    assert_eq!(hyps.lines().count() as u64, g["generated"].as_u64().unwrap());

    std::fs::write(d.join("ref.txt"), "a b c d e\nf g h i\n").unwrap();
    let e = stdout_line(&pivotgen(d, &["evaluate", "--hyp", "ref.txt", "--ref", "ref.txt"]));
    let cols: Vec<&str> = e.split('\t').collect();
    assert_eq!((cols[0], cols[2]), ("100.00", "100.00"));
}

#[test]
fn failures_exit_nonzero_with_a_json_line() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(error_kind(&pivotgen(d, &["no-such-command"])), "usage");
    assert_eq!(error_kind(&pivotgen(d, &["evaluate", "--hyp", "missing.txt", "--ref", "missing.txt"])), "io");

    std::fs::write(d.join("h.txt"), "a b\n").unwrap();
    std::fs::write(d.join("r.txt"), "a b\nc d\n").unwrap();
    assert_eq!(error_kind(&pivotgen(d, &["evaluate", "--hyp", "h.txt", "--ref", "r.txt"])), "segment_mismatch");

    std::fs::write(d.join("bad.toml"), "[optimizer]\nlr = -1.0\n").unwrap();
    let out = pivotgen(d, &["--config", "bad.toml", "train-tagger", "--train", "x.jsonl", "--out", "o"]);
    assert_eq!(error_kind(&out), "config");

    std::fs::write(d.join("p.jsonl"), r#"{"id":"1","table":[{"attribute":"name","value":""}],"text":"x"}"#).unwrap();
    assert_eq!(error_kind(&pivotgen(d, &["annotate", "--parallel", "p.jsonl", "--out", "l.jsonl"])), "parse");
}

#[test]
fn help_and_version_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    for flag in ["--help", "--version"] {
        let out = pivotgen(tmp.path(), &[flag]);
        assert!(out.status.success());
        assert!(!out.stdout.is_empty());
    }
}
