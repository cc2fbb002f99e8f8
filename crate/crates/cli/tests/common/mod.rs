#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn ayn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ayn")).current_dir(dir).args(args).output().expect("spawn ayn")
}

pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ayn(dir, args);
    assert!(
        out.status.success(),
        "ayn {args:?} failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const WORDS: [&str; 16] = [
    "the",
    "court",
    "held",
    "that",
    "appeal",
    "is",
    "allowed",
    "under",
    "section",
    "302",
    "of",
    "penal",
    "code",
    "conviction",
    "set",
    "aside",
];

/// Three small text documents in `dir/corpus`.
pub fn write_corpus(dir: &Path) {
    let corpus = dir.join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    for d in 0..3usize {
        let text: Vec<&str> = (0..300).map(|i| WORDS[(i * 7 + d * 3 + i / 5) % WORDS.len()]).collect();
        std::fs::write(corpus.join(format!("doc{d}.txt")), text.join(" ")).unwrap();
    }
}

pub const TINY_MODEL: &[&str] = &[
    "--dim",
    "16",
    "--n-layers",
    "1",
    "--n-heads",
    "2",
    "--n-kv-groups",
    "1",
    "--ffn-hidden",
    "32",
    "--max-context",
    "64",
];

/// tokenizer-train, pack and a short pretrain run inside `dir`.
pub fn tiny_pipeline(dir: &Path) {
    write_corpus(dir);
    ok(dir, &["tokenizer-train", "--input", "corpus", "--vocab-size", "300"]);
    ok(dir, &["pack", "--input", "corpus", "--seq-len", "24", "--train-fraction", "0.6"]);
    let mut args = vec!["pretrain", "--max-steps", "6", "--warmup-steps", "2", "--eval-interval", "3", "--quiet"];
    args.extend_from_slice(TINY_MODEL);
    ok(dir, &args);
}
