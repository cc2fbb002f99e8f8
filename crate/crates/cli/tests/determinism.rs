mod common;

use std::fs;

use common::{ok, tiny_pipeline};

#[test]
fn rerun_from_manifest_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_pipeline(d);
    assert!(d.join("vocab.txt.manifest").exists());
    assert!(d.join("packed/run.manifest").exists());
    assert!(d.join("model.ayn.manifest").exists());
    ok(d, &["pretrain", "--config", "model.ayn.manifest", "--output", "again.ayn"]);
    assert_eq!(fs::read(d.join("model.ayn")).unwrap(), fs::read(d.join("again.ayn")).unwrap());

    let g1 =
        ok(d, &["generate", "--prompt", "the court", "--max-new-tokens", "12", "--seed", "5", "--output", "g1.txt"]);
    let g2 = ok(d, &["generate", "--config", "g1.txt.manifest", "--output", "g2.txt"]);
    assert_eq!(g1.stdout, g2.stdout);
    assert_eq!(fs::read(d.join("g1.txt")).unwrap(), fs::read(d.join("g2.txt")).unwrap());
    let meta: serde_json::Value =
        serde_json::from_slice(g1.stderr.split(|&b| b == b'\n').find(|l| l.starts_with(b"{")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 5);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_pipeline(d);
    let mut first = vec![
        "pretrain",
        "--max-steps",
        "3",
        "--lr-decay-steps",
        "6",
        "--warmup-steps",
        "2",
        "--eval-interval",
        "3",
        "--quiet",
    ];
    first.extend_from_slice(common::TINY_MODEL);
    first.extend_from_slice(&["--output", "mid.ayn"]);
    ok(d, &first);
    ok(d, &["pretrain", "--resume", "mid.ayn", "--max-steps", "6", "--output", "resumed.ayn", "--quiet"]);
    assert_eq!(fs::read(d.join("resumed.ayn")).unwrap(), fs::read(d.join("model.ayn")).unwrap());
}

#[test]
fn finetune_writes_best_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_pipeline(d);
    let lines: Vec<String> = (0..10)
        .map(|i| {
            format!(
                r#"{{"instruction":"Summarize case {i}","input":"the appeal is allowed","output":"the conviction is set aside {i}"}}"#
            )
        })
        .collect();
    fs::write(d.join("inst.jsonl"), lines.join("\n")).unwrap();
    let out = ok(
        d,
        &[
            "finetune",
            "--data",
            "inst.jsonl",
            "--epochs",
            "1",
            "--batch-size",
            "2",
            "--seq-len",
            "48",
            "--max-lr",
            "1e-3",
        ],
    );
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 3);
    assert_eq!(summary["train_examples"], 9);
    assert!(d.join("finetuned.ayn").exists());
    assert!(d.join("finetuned.ayn.finetune.json").exists());
    ok(d, &["generate", "--checkpoint", "finetuned.ayn", "--prompt", "facts", "--max-new-tokens", "4"]);
    // The summarization template alone is longer than this model's context.
    let out = common::ayn(
        d,
        &["generate", "--checkpoint", "finetuned.ayn", "--template", "summarization", "--prompt", "facts"],
    );
    assert_eq!(out.status.code(), Some(2));
}
