use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn fluency(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluency")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a fixture corpus and a config pointing at it; returns the config path.
fn setup(dir: &Path, extra: &str) -> String {
    let corpus = dir.join("corpus.jsonl");
    let o = fluency(&["synth", "--fixture", "200", "--out", corpus.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let conf = dir.join("run.conf");
    let overridden = |line: &&str| extra.lines().any(|e| e.split('=').next() == line.split('=').next());
    let base: Vec<&str> = ["input = corpus.jsonl", "output_dir = out", "seed = 17", "k_folds = 5"]
        .iter()
        .filter(|l| !overridden(l))
        .copied()
        .collect();
    fs::write(&conf, format!("{}\n{extra}", base.join("\n"))).unwrap();
    conf.to_str().unwrap().to_owned()
}

#[test]
fn synth_then_run_writes_every_artifact() {
    let dir = TempDir::new().unwrap();
    let conf = setup(dir.path(), "");
    let o = fluency(&["run", "--config", &conf]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["manifest.json", "filtered.jsonl", "sampled.jsonl", "scores.csv", "metrics.csv", "correlations.csv", "headline.json", "report.md", "model.json"] {
        assert!(dir.path().join("out").join(name).exists(), "{name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["seed"], 17);
}

#[test]
fn single_stages_and_overrides() {
    let dir = TempDir::new().unwrap();
    let conf = setup(dir.path(), "");
    let out = dir.path().join("elsewhere");
    let out = out.to_str().unwrap();
    for stage in ["filter", "sample"] {
        let o = fluency(&["run", "--config", &conf, "--stage", stage, "--out", out, "--seed", "4"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = fluency(&["train-cv", "--config", &conf, "--out", out, "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(Path::new(out).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["stages_completed"], serde_json::json!(["filter", "sample", "train-cv"]));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn score_reads_tag_lines_from_stdin() {
    let dir = TempDir::new().unwrap();
    let conf = setup(dir.path(), "");
    assert!(fluency(&["run", "--config", &conf]).status.success());
    let model = dir.path().join("out/model.json");
    let mut child = Command::new(env!("CARGO_BIN_EXE_fluency"))
        .args(["score", "--model", model.to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"NNP VBD NNP TO VB PRP .\n\nDT NN VBD RB .\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let values: Vec<f64> = String::from_utf8(o.stdout).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 2);
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn ingest_check_summarizes() {
    let dir = TempDir::new().unwrap();
    let conf = setup(dir.path(), "");
    let o = fluency(&["ingest-check", "--config", &conf]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["n_records"], 200);
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let dir = TempDir::new().unwrap();

    let conf = setup(dir.path(), "ngram_range = 3-1\n");
    let o = fluency(&["run", "--config", &conf]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ngram_range"));

    let conf = setup(dir.path(), "colour = blue\n");
    assert_eq!(fluency(&["run", "--config", &conf]).status.code(), Some(1));

    let conf = setup(dir.path(), "k_folds = 500\n");
    let o = fluency(&["run", "--config", &conf]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("train-cv"), "{}", stderr(&o));

    let conf = setup(dir.path(), "");
    fs::write(dir.path().join("corpus.jsonl"), "not json\n").unwrap();
    let o = fluency(&["run", "--config", &conf]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(fluency(&["run"]).status.code(), Some(1));
    assert_eq!(fluency(&["--help"]).status.code(), Some(0));
}
