//! The `subtok` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad parameters or input format,
//! 3 numerical failure during training.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::analysis::{segmentation_consistency, vocab_overlap, OverlapOptions};
use crate::corpus::{count_word_types, stream_sentences, SentenceStream};
use crate::error::{Error, Result};
use crate::lm::{
    format_embeddings, load_model, perplexity, save_model, train, unigram_baseline_ppl, LmModel, OutputVocab,
    EMBEDDINGS_HEADER,
};
use crate::scalar::{DType, Scalar};
use crate::segmentation::{
    build_segmenter, train_bpe, train_ulm, BpeOptions, MergeTable, SeedVocabParams, Segmenter, SubwordVocab,
    UlmOptions, UNK_CHAR_TOKEN,
};

pub use config::{parse_config, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "subtok", version, about = "Subword vocabularies and subword-aware bidirectional language models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a BPE or unigram-LM subword vocabulary.
    TrainVocab(TrainVocabArgs),
    /// Segment whitespace-tokenized text into subword pieces.
    Segment(SegmentArgs),
    /// Train the bidirectional language model.
    TrainLm(TrainLmArgs),
    /// Report forward, backward and combined perplexity.
    EvalPpl(EvalPplArgs),
    /// Dump contextual word embeddings.
    Embed(EmbedArgs),
    /// Overlap between two vocabularies.
    CompareVocabs(CompareArgs),
    /// Segmentation consistency of a vocabulary over a corpus.
    Consistency(ConsistencyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Bpe,
    Ulm,
}

#[derive(Debug, Args)]
pub struct TrainVocabArgs {
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    #[arg(long)]
    pub size: usize,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Vocabulary output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Merge table output path (BPE); defaults to `<out>.merges`.
    #[arg(long)]
    pub merges_out: Option<PathBuf>,
    /// Seed recorded with the run; both trainers are deterministic.
    #[arg(long)]
    pub seed: u64,
    /// Fraction of multi-character entries kept per pruning round (ULM).
    #[arg(long, default_value_t = 0.8)]
    pub eta: f64,
    /// EM iterations between pruning rounds (ULM).
    #[arg(long, default_value_t = 2)]
    pub em_iters: usize,
    /// Longest seed substring, in characters (ULM).
    #[arg(long, default_value_t = SeedVocabParams::default().max_subword_len)]
    pub max_sub_len: usize,
    /// Seed vocabulary cap (ULM).
    #[arg(long, default_value_t = SeedVocabParams::default().max_seed_size)]
    pub max_seed_size: usize,
    /// Train BPE without the end-of-word marker.
    #[arg(long)]
    pub no_boundary_marker: bool,
}

#[derive(Debug, Args)]
pub struct SegmenterArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    /// Merge table; required for BPE vocabularies, rejected for ULM.
    #[arg(long)]
    pub merges: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Prefix written before the first piece of every word.
    #[arg(long, default_value = "▁")]
    pub word_marker: String,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// key = value hyperparameter file; omitted keys use the toy preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Also write the per-epoch report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalPplArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Ignore single-character entries.
    #[arg(long)]
    pub exclude_chars: bool,
    /// Compare forms with the BPE end-of-word marker removed.
    #[arg(long)]
    pub strip_marker: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConsistencyArgs {
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Per-type TSV report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_sentences(path: &Path) -> Result<SentenceStream> {
    stream_sentences(open(path)?)
}

fn load_segmenter(args: &SegmenterArgs) -> Result<Box<dyn Segmenter>> {
    let vocab = SubwordVocab::read(&args.vocab)?;
    let merges = args.merges.as_deref().map(MergeTable::read).transpose()?;
    build_segmenter(vocab, merges)
}

fn to_json<S: serde::Serialize>(value: &S) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Invariant(format!("JSON serialization: {e}")))
}

/// Library parameter names that correspond one-to-one to CLI flags.
const FLAG_PARAMS: &[&str] = &["size", "eta", "em-iters", "max-sub-len", "max-seed-size", "corpus", "merges", "vocab"];

/// Runs one parsed command, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    dispatch(cli, out).map_err(|e| match e {
        Error::Param { name, message } if FLAG_PARAMS.contains(&name.as_str()) => Error::Param {
            name: format!("--{name}"),
            message,
        },
        e => e,
    })
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::TrainVocab(a) => train_vocab(a, out),
        Command::Segment(a) => segment(a, out),
        Command::TrainLm(a) => train_lm(a, out),
        Command::EvalPpl(a) => eval_ppl(a, out),
        Command::Embed(a) => embed(a, out),
        Command::CompareVocabs(a) => compare_vocabs(a, out),
        Command::Consistency(a) => consistency(a, out),
    }
}

fn train_vocab(a: TrainVocabArgs, out: &mut dyn Write) -> Result<()> {
    let stats = count_word_types(open(&a.corpus)?)?;
    if stats.is_empty() {
        return Err(Error::param("--corpus", "corpus contains no words"));
    }
    let chars = stats.character_set().len();
    let summary = match a.algo {
        AlgoArg::Bpe => {
            let opts = BpeOptions {
                boundary_marker: !a.no_boundary_marker,
            };
            let (vocab, merges) = train_bpe(&stats, a.size, opts)?;
            let merges_path = a.merges_out.clone().unwrap_or_else(|| {
                let mut p = a.out.clone().into_os_string();
                p.push(".merges");
                PathBuf::from(p)
            });
            vocab.write(&a.out)?;
            merges.write(&merges_path)?;
            format!(
                "algo=bpe size={} characters={chars} merges={} word_types={} seed={}",
                vocab.len(),
                merges.len(),
                stats.num_types(),
                a.seed
            )
        }
        AlgoArg::Ulm => {
            let opts = UlmOptions {
                seed: SeedVocabParams {
                    max_subword_len: a.max_sub_len,
                    max_seed_size: a.max_seed_size,
                },
                em_iters_per_round: a.em_iters,
                keep_fraction: a.eta,
            };
            let vocab = train_ulm(&stats, a.size, opts)?;
            vocab.write(&a.out)?;
            format!(
                "algo=ulm size={} characters={chars} multi_char={} word_types={} seed={}",
                vocab.len(),
                vocab.num_multi_char(),
                stats.num_types(),
                a.seed
            )
        }
    };
    writeln!(out, "{summary}")?;
    Ok(())
}

fn segment(a: SegmentArgs, out: &mut dyn Write) -> Result<()> {
    let seg = load_segmenter(&a.segmenter)?;
    let text = {
        let mut r = open(&a.input)?;
        let mut bytes = Vec::new();
        std::io::Read::read_to_end(&mut r, &mut bytes).map_err(|e| Error::io(&a.input, e))?;
        String::from_utf8(bytes).map_err(|e| Error::Decode {
            offset: e.utf8_error().valid_up_to(),
        })?
    };
    let mut result = String::with_capacity(text.len() * 2);
    let mut unknown: BTreeMap<String, usize> = BTreeMap::new();
    let (mut lines, mut words) = (0usize, 0usize);
    for line in text.lines() {
        lines += 1;
        let mut first_word = true;
        for w in line.split_whitespace() {
            words += 1;
            if !first_word {
                result.push(' ');
            }
            first_word = false;
            let s = seg.segment(w);
            let mut first_piece = true;
            for (i, piece) in s.surface_pieces().enumerate() {
                // A bare end-of-word marker has no surface form.
                if piece.is_empty() {
                    continue;
                }
                if first_piece {
                    first_piece = false;
                    result.push_str(&a.word_marker);
                } else {
                    result.push(' ');
                }
                if s.is_unknown(i) {
                    *unknown.entry(piece.to_string()).or_default() += 1;
                    result.push_str(UNK_CHAR_TOKEN);
                } else {
                    result.push_str(piece);
                }
            }
        }
        result.push('\n');
    }
    write_file(&a.out, result.as_bytes())?;
    for (c, n) in &unknown {
        warn!("character {c:?} is not in the vocabulary ({n} occurrences); written as {UNK_CHAR_TOKEN}");
    }
    writeln!(out, "lines={lines} words={words} unknown_chars={}", unknown.values().sum::<usize>())?;
    Ok(())
}

fn train_lm(a: TrainLmArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => parse_config(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => RunConfig::default(),
    };
    cfg.train.seed = a.seed;
    let vocab = SubwordVocab::read(&a.segmenter.vocab)?;
    let merges = a.segmenter.merges.as_deref().map(MergeTable::read).transpose()?;
    let corpus = read_sentences(&a.corpus)?;
    if corpus.is_empty() {
        return Err(Error::param("--corpus", "training corpus has no sentences"));
    }
    let valid = a.valid.as_deref().map(read_sentences).transpose()?;
    let output = OutputVocab::from_stats(&corpus.stats(), cfg.model.max_output_words);
    info!(
        "unigram baseline perplexity {:.4}",
        unigram_baseline_ppl(&output, &corpus)?
    );
    let report = match cfg.dtype {
        DType::F32 => fit::<f32>(&cfg, vocab, merges, output, &corpus, valid.as_ref(), &a.out)?,
        DType::F64 => fit::<f64>(&cfg, vocab, merges, output, &corpus, valid.as_ref(), &a.out)?,
    };
    if let Some(p) = &a.report {
        write_file(p, report.as_bytes())?;
    }
    out.write_all(report.as_bytes())?;
    Ok(())
}

fn fit<T: Scalar>(
    cfg: &RunConfig,
    vocab: SubwordVocab,
    merges: Option<MergeTable>,
    output: OutputVocab,
    corpus: &SentenceStream,
    valid: Option<&SentenceStream>,
    path: &Path,
) -> Result<String> {
    let mut model = LmModel::<T>::new(cfg.model.clone(), vocab, merges, output, cfg.train.seed)?;
    let report = train(&mut model, corpus, valid, &cfg.train)?;
    save_model(path, &model)?;
    Ok(report.to_tsv())
}

fn eval_ppl(a: EvalPplArgs, out: &mut dyn Write) -> Result<()> {
    if a.batch_size == 0 {
        return Err(Error::param("--batch-size", "must be positive"));
    }
    let model = load_model::<f64>(&a.model)?;
    let corpus = read_sentences(&a.corpus)?;
    let r = perplexity(&model, &corpus, a.batch_size)?;
    write!(
        out,
        "forward_ppl\t{:.6}\nbackward_ppl\t{:.6}\ncombined_ppl\t{:.6}\npredictions\t{}\n",
        r.forward, r.backward, r.combined, r.predictions
    )?;
    Ok(())
}

fn embed(a: EmbedArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model::<f64>(&a.model)?;
    let corpus = read_sentences(&a.input)?;
    let dim = model.config().embedding_dim();
    let mut dump = format!("{EMBEDDINGS_HEADER} dim={dim}\n");
    for (i, s) in corpus.sentences().iter().enumerate() {
        if i > 0 {
            dump.push('\n');
        }
        let vectors = model.extract_embeddings(s)?;
        dump.push_str(&format_embeddings(s, &vectors));
    }
    write_file(&a.out, dump.as_bytes())?;
    writeln!(out, "sentences={} words={} dim={dim}", corpus.len(), corpus.num_words())?;
    Ok(())
}

fn compare_vocabs(a: CompareArgs, out: &mut dyn Write) -> Result<()> {
    let va = SubwordVocab::read(&a.a)?;
    let vb = SubwordVocab::read(&a.b)?;
    let report = vocab_overlap(
        &va,
        &vb,
        OverlapOptions {
            exclude_single_chars: a.exclude_chars,
            strip_marker: a.strip_marker,
        },
    );
    if let Some(p) = &a.json {
        write_file(p, to_json(&report)?.as_bytes())?;
    }
    out.write_all(report.to_tsv().as_bytes())?;
    Ok(())
}

fn consistency(a: ConsistencyArgs, out: &mut dyn Write) -> Result<()> {
    let seg = load_segmenter(&a.segmenter)?;
    let corpus = read_sentences(&a.corpus)?;
    let report = segmentation_consistency(seg.as_ref(), &corpus);
    if let Some(p) = &a.out {
        write_file(p, report.to_tsv().as_bytes())?;
    }
    if let Some(p) = &a.json {
        write_file(p, to_json(&report)?.as_bytes())?;
    }
    let mut s = String::from("algo\tword_types\tconsistent\tfraction\n");
    let _ = writeln!(
        s,
        "{}\t{}\t{}\t{:.6}",
        report.algo, report.word_types, report.consistent_types, report.fraction
    );
    out.write_all(s.as_bytes())?;
    Ok(())
}

