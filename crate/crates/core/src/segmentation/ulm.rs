use std::collections::HashMap;

use log::{debug, warn};

use crate::corpus::CorpusStats;
use crate::error::{Error, Result};

use super::vocab::{canonical_order, log_add};
use super::{is_single_char, Algo, SubwordVocab};

/// Expected counts below this are raised to it in the M-step so that no
/// entry, in particular no single character, reaches probability zero.
const COUNT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedVocabParams {
    pub max_subword_len: usize,
    pub max_seed_size: usize,
}

impl Default for SeedVocabParams {
    fn default() -> Self {
        Self {
            max_subword_len: 8,
            max_seed_size: 20_000,
        }
    }
}

impl SeedVocabParams {
    fn validate(&self, stats: &CorpusStats) -> Result<()> {
        if self.max_subword_len < 1 {
            return Err(Error::param("max-sub-len", "must be at least 1"));
        }
        if self.max_seed_size < stats.character_set().len() {
            return Err(Error::param(
                "max-seed-size",
                format!(
                    "seed size {} below character set size {}",
                    self.max_seed_size,
                    stats.character_set().len()
                ),
            ));
        }
        Ok(())
    }
}

/// Pruning schedule for [`train_ulm`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UlmOptions {
    pub seed: SeedVocabParams,
    pub em_iters_per_round: usize,
    /// Fraction of multi-character entries kept per pruning round.
    pub keep_fraction: f64,
}

impl Default for UlmOptions {
    fn default() -> Self {
        Self {
            seed: SeedVocabParams::default(),
            em_iters_per_round: 2,
            keep_fraction: 0.8,
        }
    }
}

/// Seed vocabulary: every character plus the most frequent substrings of
/// length 2..=`max_subword_len`, counted with overlap and weighted by
/// word-type count. Initial probabilities are proportional to frequency.
pub fn build_seed_vocab(stats: &CorpusStats, params: SeedVocabParams) -> Result<SubwordVocab> {
    params.validate(stats)?;
    let mut chars: HashMap<char, u64> = HashMap::new();
    let mut substrings: HashMap<&str, u64> = HashMap::new();
    for (word, &count) in stats.word_types() {
        let bounds = char_bounds(word);
        let n = bounds.len() - 1;
        for c in word.chars() {
            *chars.entry(c).or_insert(0) += count;
        }
        for i in 0..n {
            for len in 2..=params.max_subword_len.min(n - i) {
                *substrings.entry(&word[bounds[i]..bounds[i + len]]).or_insert(0) += count;
            }
        }
    }

    let mut multi: Vec<(&str, u64)> = substrings.into_iter().collect();
    multi.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    multi.truncate(params.max_seed_size - chars.len());

    let total: f64 = chars.values().chain(multi.iter().map(|(_, c)| c)).sum::<u64>() as f64;
    let log_total = total.ln();
    let entries = chars
        .into_iter()
        .map(|(c, n)| (c.to_string(), (n as f64).ln() - log_total))
        .chain(
            multi
                .into_iter()
                .map(|(s, n)| (s.to_owned(), (n as f64).ln() - log_total)),
        )
        .collect();
    SubwordVocab::new(Algo::Ulm, entries)
}

pub(crate) fn char_bounds(word: &str) -> Vec<usize> {
    word.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect()
}

struct Edge {
    start: usize,
    end: usize,
    id: usize,
    log_prob: f64,
}

fn lattice(word: &str, bounds: &[usize], vocab: &SubwordVocab) -> Vec<Edge> {
    let n = bounds.len() - 1;
    let max_len = vocab.max_piece_chars();
    let mut edges = Vec::new();
    for start in 0..n {
        for end in start + 1..=n.min(start + max_len) {
            if let Some(id) = vocab.id(&word[bounds[start]..bounds[end]]) {
                edges.push(Edge {
                    start,
                    end,
                    id,
                    log_prob: vocab.entries()[id].1,
                });
            }
        }
    }
    edges
}

/// One EM iteration.
///
/// The E-step runs forward-backward over each word type's segmentation
/// lattice in log space and accumulates count-weighted expected piece counts;
/// the M-step renormalizes them. Returns the updated vocabulary and the
/// corpus log-likelihood `Σ_w count(w)·log Z(w)` under the input vocabulary.
pub fn em_step(vocab: &SubwordVocab, stats: &CorpusStats) -> Result<(SubwordVocab, f64)> {
    let mut expected = vec![0.0f64; vocab.len()];
    let mut log_likelihood = 0.0;
    for (word, &count) in stats.word_types() {
        let bounds = char_bounds(word);
        let n = bounds.len() - 1;
        let edges = lattice(word, &bounds, vocab);

        let mut alpha = vec![f64::NEG_INFINITY; n + 1];
        alpha[0] = 0.0;
        // Edges are ordered by start, so every alpha[start] is final before use.
        for e in &edges {
            alpha[e.end] = log_add(alpha[e.end], alpha[e.start] + e.log_prob);
        }
        let log_z = alpha[n];
        if log_z == f64::NEG_INFINITY {
            return Err(Error::Invariant(format!(
                "word {word:?} has no segmentation under the current vocabulary"
            )));
        }
        let mut beta = vec![f64::NEG_INFINITY; n + 1];
        beta[n] = 0.0;
        for e in edges.iter().rev() {
            beta[e.start] = log_add(beta[e.start], e.log_prob + beta[e.end]);
        }

        let c = count as f64;
        for e in &edges {
            let posterior = (alpha[e.start] + e.log_prob + beta[e.end] - log_z).exp();
            expected[e.id] += c * posterior;
        }
        log_likelihood += c * log_z;
    }

    let floored: Vec<f64> = expected.iter().map(|&x| x.max(COUNT_FLOOR)).collect();
    let log_total = floored.iter().sum::<f64>().ln();
    let entries = vocab
        .entries()
        .iter()
        .zip(&floored)
        .map(|((form, _), &x)| (form.clone(), x.ln() - log_total))
        .collect();
    Ok((SubwordVocab::new(Algo::Ulm, entries)?, log_likelihood))
}

fn keep_top_multi(vocab: &SubwordVocab, keep: usize) -> Result<SubwordVocab> {
    let (mut singles, mut multi): (Vec<_>, Vec<_>) = vocab
        .entries()
        .iter()
        .cloned()
        .partition(|(f, _)| is_single_char(f));
    multi.sort_by(canonical_order);
    multi.truncate(keep);
    singles.extend(multi);
    Ok(SubwordVocab::new(Algo::Ulm, singles)?.renormalized())
}

/// Keeps every single character and the top `⌈η·M⌉` of the `M`
/// multi-character entries by probability (ties: lexicographic), then
/// renormalizes.
pub fn prune_vocab(vocab: &SubwordVocab, keep_fraction: f64) -> Result<SubwordVocab> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::param(
            "eta",
            format!("keep fraction {keep_fraction} outside (0, 1]"),
        ));
    }
    let m = vocab.num_multi_char();
    // The epsilon absorbs products like 0.7 * 10 = 7.000000000000001.
    let keep = ((keep_fraction * m as f64 - 1e-9).ceil().max(0.0) as usize).min(m);
    keep_top_multi(vocab, keep)
}

/// Alternates EM rounds with pruning until the vocabulary fits
/// `target_size`. The last round prunes exactly to `target_size` and is
/// followed by one more EM round so that the scores fit the final support.
pub fn train_ulm(stats: &CorpusStats, target_size: usize, opts: UlmOptions) -> Result<SubwordVocab> {
    if stats.is_empty() {
        return Err(Error::param("corpus", "corpus has no words"));
    }
    let n_chars = stats.character_set().len();
    if target_size < n_chars {
        return Err(Error::param(
            "size",
            format!("size {target_size} below character floor {n_chars}"),
        ));
    }
    if opts.em_iters_per_round == 0 {
        return Err(Error::param("em-iters", "must be at least 1"));
    }
    if !(opts.keep_fraction > 0.0 && opts.keep_fraction <= 1.0) {
        return Err(Error::param(
            "eta",
            format!("keep fraction {} outside (0, 1]", opts.keep_fraction),
        ));
    }

    let mut vocab = build_seed_vocab(stats, opts.seed)?;
    if vocab.len() < target_size {
        warn!(
            "seed vocabulary has only {} entries (requested {target_size})",
            vocab.len()
        );
    }
    let em_round = |mut v: SubwordVocab| -> Result<SubwordVocab> {
        for _ in 0..opts.em_iters_per_round {
            let (next, ll) = em_step(&v, stats)?;
            debug!("EM: size {} log-likelihood {ll}", v.len());
            v = next;
        }
        Ok(v)
    };

    loop {
        vocab = em_round(vocab)?;
        if vocab.len() <= target_size {
            break;
        }
        let m = vocab.num_multi_char();
        let mut keep = ((opts.keep_fraction * m as f64 - 1e-9).ceil().max(0.0) as usize).min(m);
        // With η = 1 a round would never shrink the vocabulary.
        if keep == m {
            keep = m - 1;
        }
        let singles = vocab.len() - m;
        if singles + keep <= target_size {
            vocab = keep_top_multi(&vocab, target_size - singles)?;
            vocab = em_round(vocab)?;
            break;
        }
        vocab = keep_top_multi(&vocab, keep)?;
    }
    Ok(vocab)
}
