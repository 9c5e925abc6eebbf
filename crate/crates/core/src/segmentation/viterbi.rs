use std::cmp::Ordering;

use crate::error::{Error, Result};

use super::ulm::char_bounds;
use super::{compare_candidates, Algo, Segmentation, Segmenter, SubwordVocab};

/// Longest word accepted by [`brute_force_best_segmentation`].
pub const BRUTE_FORCE_MAX_LEN: usize = 16;

/// Score of a piece covering one out-of-vocabulary character.
const UNK_LOG_PROB: f64 = -100.0;

/// Piece spanning chars `[start, end)`, scored, or `None` if the span is not
/// a valid piece.
fn piece_score(
    word: &str,
    bounds: &[usize],
    vocab: &SubwordVocab,
    start: usize,
    end: usize,
) -> Option<(f64, bool)> {
    let form = &word[bounds[start]..bounds[end]];
    if let Some(score) = vocab.score(form) {
        return Some((score, false));
    }
    if end == start + 1 {
        return Some((UNK_LOG_PROB, true));
    }
    None
}

fn build(word: &str, bounds: &[usize], spans: &[(usize, usize)], vocab: &SubwordVocab) -> Segmentation {
    let mut pieces = Vec::with_capacity(spans.len());
    let mut unknown = Vec::new();
    for (i, &(s, e)) in spans.iter().enumerate() {
        let form = &word[bounds[s]..bounds[e]];
        if !vocab.contains(form) {
            unknown.push(i);
        }
        pieces.push(form.to_owned());
    }
    Segmentation::new(word, pieces, unknown)
}

#[derive(Clone)]
struct Best {
    score: f64,
    spans: Vec<(usize, usize)>,
}

/// Maximum-likelihood segmentation under a unigram vocabulary.
///
/// Dynamic program over character positions: the best analysis of each
/// prefix is kept, ordered by total log-probability (summed left to right),
/// then fewer pieces, then the lexicographically smaller piece sequence.
/// Characters missing from the vocabulary become flagged single pieces.
pub fn segment_viterbi(word: &str, vocab: &SubwordVocab) -> Segmentation {
    let bounds = char_bounds(word);
    let n = bounds.len() - 1;
    let max_len = vocab.max_piece_chars().max(1);
    let mut best: Vec<Option<Best>> = vec![None; n + 1];
    best[0] = Some(Best {
        score: 0.0,
        spans: Vec::new(),
    });

    for end in 1..=n {
        let mut winner: Option<Best> = None;
        for start in end.saturating_sub(max_len)..end {
            let Some(prefix) = &best[start] else { continue };
            let Some((score, _)) = piece_score(word, &bounds, vocab, start, end) else {
                continue;
            };
            let mut spans = prefix.spans.clone();
            spans.push((start, end));
            let cand = Best {
                score: prefix.score + score,
                spans,
            };
            let better = match &winner {
                None => true,
                Some(w) => order(word, &bounds, &cand, w) == Ordering::Less,
            };
            if better {
                winner = Some(cand);
            }
        }
        best[end] = winner;
    }

    let spans = best[n].take().map(|b| b.spans).unwrap_or_default();
    build(word, &bounds, &spans, vocab)
}

fn order(word: &str, bounds: &[usize], a: &Best, b: &Best) -> Ordering {
    let forms = |x: &Best| -> Vec<&str> {
        x.spans
            .iter()
            .map(|&(s, e)| &word[bounds[s]..bounds[e]])
            .collect()
    };
    compare_candidates(a.score, &forms(a), b.score, &forms(b))
}

/// Exhaustive oracle for [`segment_viterbi`]: enumerates all `2^(n-1)` split
/// patterns and returns the best valid one under the same ordering.
pub fn brute_force_best_segmentation(word: &str, vocab: &SubwordVocab) -> Result<Segmentation> {
    let bounds = char_bounds(word);
    let n = bounds.len() - 1;
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(Error::param(
            "word",
            format!("word length {n} exceeds brute-force bound {BRUTE_FORCE_MAX_LEN}"),
        ));
    }
    if n == 0 {
        return Ok(Segmentation::new(word, Vec::new(), Vec::new()));
    }

    let mut best: Option<Best> = None;
    'patterns: for mask in 0u32..(1u32 << (n - 1)) {
        let mut spans = Vec::new();
        let mut start = 0;
        for pos in 1..=n {
            if pos == n || mask & (1 << (pos - 1)) != 0 {
                spans.push((start, pos));
                start = pos;
            }
        }
        let mut score = 0.0;
        for &(s, e) in &spans {
            match piece_score(word, &bounds, vocab, s, e) {
                Some((p, _)) => score += p,
                None => continue 'patterns,
            }
        }
        let cand = Best { score, spans };
        let better = match &best {
            None => true,
            Some(b) => order(word, &bounds, &cand, b) == Ordering::Less,
        };
        if better {
            best = Some(cand);
        }
    }
    let spans = best.map(|b| b.spans).unwrap_or_default();
    Ok(build(word, &bounds, &spans, vocab))
}

/// Viterbi decoder bound to a unigram vocabulary.
#[derive(Clone, Debug)]
pub struct UlmSegmenter {
    vocab: SubwordVocab,
}

impl UlmSegmenter {
    pub fn new(vocab: SubwordVocab) -> Result<Self> {
        if vocab.algo() != Algo::Ulm {
            return Err(Error::param("vocab", "Viterbi segmenter needs a ulm vocabulary"));
        }
        Ok(Self { vocab })
    }
}

impl Segmenter for UlmSegmenter {
    fn segment(&self, word: &str) -> Segmentation {
        segment_viterbi(word, &self.vocab)
    }

    fn vocab(&self) -> &SubwordVocab {
        &self.vocab
    }
}
