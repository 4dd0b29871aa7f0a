//! End-to-end checks of the command line binary: exit codes for the
//! documented failure classes, plus a tiny synth -> train -> score ->
//! eval-det pipeline through real files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wakescore"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn wakescore")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

// Small corpus; one short training so the pipeline stays under a few
// seconds. The keyword needs 10 phones, everything else is shrunk.
fn write_tiny_config(path: &Path) {
    fs::write(
        path,
        r#"
seed = 23
hidden_dim = 8
num_layers = 1
keyword_epochs = 2

[train]
epochs = 2
batch_size_per_worker = 8
workers = 1

[synth]
phonetic_count = 40
disc_count = 2
test_positives = 6
test_negatives = 30
noise_level = 0.12
"#,
    )
    .expect("write config");
}

#[test]
fn invalid_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "hidden_dim = 0\n").unwrap();
    let out = run(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
}

#[test]
fn unknown_config_key_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("typo.toml");
    fs::write(&config, "hiden_dim = 8\n").unwrap();
    let out = run(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
}

#[test]
fn missing_manifest_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "featurize",
        "--manifest",
        dir.path().join("nope.jsonl").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
}

#[test]
fn help_lists_every_subcommand() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    for sub in ["synth", "augment", "featurize", "train", "score", "eval-det", "demo"] {
        assert!(text.contains(sub), "help missing {sub}:\n{text}");
    }
}

#[test]
fn synth_train_score_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    write_tiny_config(&config);
    let corpus = dir.path().join("corpus");
    let out = run(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        corpus.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "synth: {}", stderr_of(&out));
    for name in ["phonetic.jsonl", "disc.jsonl", "test.jsonl"] {
        assert!(corpus.join(name).exists(), "missing {name}");
    }

    let model_dir = dir.path().join("model");
    let out = run(&[
        "train",
        "--mode",
        "baseline",
        "--phonetic-manifest",
        corpus.join("phonetic.jsonl").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        model_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "train: {}", stderr_of(&out));
    let checkpoint = model_dir.join("final.wsck");
    assert!(checkpoint.exists());
    assert!(model_dir.join("loss_log.csv").exists());

    let scores = dir.path().join("scores.tsv");
    let det_input = dir.path().join("segments.csv");
    let out = run(&[
        "score",
        "--model",
        checkpoint.to_str().unwrap(),
        "--manifest",
        corpus.join("test.jsonl").to_str().unwrap(),
        "--head",
        "phonetic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        scores.to_str().unwrap(),
        "--det-csv",
        det_input.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "score: {}", stderr_of(&out));
    let score_lines = fs::read_to_string(&scores).unwrap();
    assert_eq!(score_lines.lines().count(), 37, "header + 6 + 30 score rows");
    assert!(score_lines.starts_with("id\t"));

    let eval_dir = dir.path().join("eval");
    let out = run(&[
        "eval-det",
        "--scores",
        det_input.to_str().unwrap(),
        "--out-dir",
        eval_dir.to_str().unwrap(),
        "--fa-targets",
        "1.0,2.0",
    ]);
    assert!(out.status.success(), "eval-det: {}", stderr_of(&out));
    assert!(eval_dir.join("det_curve.csv").exists());
    assert!(eval_dir.join("det_curve.svg").exists());
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(table.contains("fa_per_hour_target"), "stdout:\n{table}");
}

#[test]
fn score_rejects_wrong_head_data_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    write_tiny_config(&config);
    let corpus = dir.path().join("corpus");
    assert!(run(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        corpus.to_str().unwrap(),
    ])
    .status
    .success());
    let model_dir = dir.path().join("model");
    assert!(run(&[
        "train",
        "--mode",
        "baseline",
        "--phonetic-manifest",
        corpus.join("phonetic.jsonl").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        model_dir.to_str().unwrap(),
    ])
    .status
    .success());
    // Transcript-only utterances carry no binary labels, so a DET input
    // cannot be derived from them.
    let out = run(&[
        "score",
        "--model",
        model_dir.join("final.wsck").to_str().unwrap(),
        "--manifest",
        corpus.join("phonetic.jsonl").to_str().unwrap(),
        "--head",
        "phonetic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("s.tsv").to_str().unwrap(),
        "--det-csv",
        dir.path().join("d.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
}
