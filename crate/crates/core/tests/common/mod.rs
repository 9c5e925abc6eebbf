#![allow(dead_code)]

pub mod gradients;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use sha2::{Digest, Sha256};
use subtok::corpus::{stream_sentences, CorpusStats, SentenceStream};
use subtok::segmentation::{train_bpe, train_ulm, BpeOptions, MergeTable, SubwordVocab, UlmOptions};

pub fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

pub fn toy_train() -> &'static SentenceStream {
    static S: OnceLock<SentenceStream> = OnceLock::new();
    S.get_or_init(|| {
        let text = std::fs::read(data_path("toy.train.txt")).unwrap();
        stream_sentences(text.as_slice()).unwrap()
    })
}

pub fn toy_valid() -> &'static SentenceStream {
    static S: OnceLock<SentenceStream> = OnceLock::new();
    S.get_or_init(|| {
        let text = std::fs::read(data_path("toy.valid.txt")).unwrap();
        stream_sentences(text.as_slice()).unwrap()
    })
}

pub fn toy_stats() -> &'static CorpusStats {
    static S: OnceLock<CorpusStats> = OnceLock::new();
    S.get_or_init(|| toy_train().stats())
}

pub fn bpe(size: usize) -> (SubwordVocab, MergeTable) {
    train_bpe(toy_stats(), size, BpeOptions::default()).unwrap()
}

pub fn ulm(size: usize) -> SubwordVocab {
    train_ulm(toy_stats(), size, UlmOptions::default()).unwrap()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn subtok(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subtok"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("failed to spawn subtok")
}

pub fn blessing() -> bool {
    std::env::var_os("SUBTOK_BLESS").is_some_and(|v| v == "1")
}

/// Outcome of comparing one produced artifact with its committed fixture.
pub struct GoldenCheck {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

fn compare(name: &str, produced: &[u8]) -> GoldenCheck {
    let path = golden_dir().join(name);
    if blessing() {
        std::fs::write(&path, produced).unwrap();
        return GoldenCheck {
            name: name.to_string(),
            ok: true,
            detail: "blessed".to_string(),
        };
    }
    match std::fs::read(&path) {
        Ok(expected) if expected == produced => GoldenCheck {
            name: name.to_string(),
            ok: true,
            detail: format!("{} bytes", produced.len()),
        },
        Ok(expected) => {
            let line = expected
                .split(|&b| b == b'\n')
                .zip(produced.split(|&b| b == b'\n'))
                .position(|(a, b)| a != b)
                .map_or("length".to_string(), |i| format!("line {}", i + 1));
            GoldenCheck {
                name: name.to_string(),
                ok: false,
                detail: format!("differs from fixture at {line}"),
            }
        }
        Err(e) => GoldenCheck {
            name: name.to_string(),
            ok: false,
            detail: format!("missing fixture {}: {e}", path.display()),
        },
    }
}

fn run_ok(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = subtok(dir, args);
    assert!(
        out.status.success(),
        "subtok {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

/// Runs every subcommand on the bundled corpus in a scratch directory and
/// compares stdout and written files with the fixtures in `tests/golden`.
/// With `SUBTOK_BLESS=1` the fixtures are rewritten instead.
pub fn run_cli_goldens() -> Vec<GoldenCheck> {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let train = data_path("toy.train.txt");
    let valid = data_path("toy.valid.txt");
    let (train, valid) = (train.to_str().unwrap(), valid.to_str().unwrap());
    let tiny_cfg = golden_dir().join("tiny.cfg");
    let embed_in = golden_dir().join("embed_input.txt");
    let read = |name: &str| std::fs::read(d.join(name)).unwrap();
    let mut checks = Vec::new();

    let s = run_ok(d, &["train-vocab", "--algo", "bpe", "--size", "500", "--corpus", train, "--out", "bpe500.vocab", "--seed", "1"]);
    checks.push(compare("train_vocab_bpe.stdout", &s));
    checks.push(compare("bpe500.vocab", &read("bpe500.vocab")));
    checks.push(compare("bpe500.vocab.merges", &read("bpe500.vocab.merges")));

    let s = run_ok(d, &["train-vocab", "--algo", "ulm", "--size", "500", "--corpus", train, "--out", "ulm500.vocab", "--seed", "1"]);
    checks.push(compare("train_vocab_ulm.stdout", &s));
    checks.push(compare("ulm500.vocab", &read("ulm500.vocab")));

    let s = run_ok(d, &["segment", "--vocab", "bpe500.vocab", "--merges", "bpe500.vocab.merges", "--in", valid, "--out", "seg_bpe.txt"]);
    checks.push(compare("segment_bpe.stdout", &s));
    checks.push(compare("seg_bpe.txt", &read("seg_bpe.txt")));
    let s = run_ok(d, &["segment", "--vocab", "ulm500.vocab", "--in", valid, "--out", "seg_ulm.txt"]);
    checks.push(compare("segment_ulm.stdout", &s));
    checks.push(compare("seg_ulm.txt", &read("seg_ulm.txt")));

    let s = run_ok(d, &["compare-vocabs", "--a", "bpe500.vocab", "--b", "ulm500.vocab", "--json", "compare.json"]);
    checks.push(compare("compare_vocabs.tsv", &s));
    checks.push(compare("compare.json", &read("compare.json")));

    let s = run_ok(d, &["consistency", "--vocab", "bpe500.vocab", "--merges", "bpe500.vocab.merges", "--corpus", train, "--out", "consistency_bpe.tsv"]);
    checks.push(compare("consistency_bpe.stdout", &s));
    checks.push(compare("consistency_bpe.tsv", &read("consistency_bpe.tsv")));
    let s = run_ok(d, &["consistency", "--vocab", "ulm500.vocab", "--corpus", train, "--json", "consistency_ulm.json"]);
    checks.push(compare("consistency_ulm.stdout", &s));
    checks.push(compare("consistency_ulm.json", &read("consistency_ulm.json")));

    let s = run_ok(
        d,
        &[
            "train-lm", "--vocab", "bpe500.vocab", "--merges", "bpe500.vocab.merges", "--corpus", train, "--valid", valid,
            "--out", "tiny.ckpt", "--config", tiny_cfg.to_str().unwrap(), "--seed", "11",
        ],
    );
    checks.push(compare("train_lm.tsv", &s));
    let ckpt_hash = format!("{}\n", sha256_hex(&read("tiny.ckpt")));
    checks.push(compare("tiny.ckpt.sha256", ckpt_hash.as_bytes()));

    let s = run_ok(d, &["eval-ppl", "--model", "tiny.ckpt", "--corpus", valid]);
    checks.push(compare("eval_ppl.txt", &s));

    let s = run_ok(d, &["embed", "--model", "tiny.ckpt", "--in", embed_in.to_str().unwrap(), "--out", "embed.txt"]);
    checks.push(compare("embed.stdout", &s));
    checks.push(compare("embed.txt", &read("embed.txt")));
    checks
}
