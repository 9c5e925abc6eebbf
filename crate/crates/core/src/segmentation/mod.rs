//! Unsupervised subword segmentation.
//!
//! Both algorithms share one framework: corpus frequency is the goodness
//! score, and a decoder turns a word into pieces. BPE decodes greedily by
//! replaying merge rules; the unigram model decodes with a Viterbi search
//! over the segmentation lattice.

mod bpe;
mod ulm;
mod viterbi;
mod vocab;

pub use bpe::{segment_bpe, train_bpe, BpeOptions, BpeSegmenter, MergeTable};
pub use ulm::{build_seed_vocab, em_step, prune_vocab, train_ulm, SeedVocabParams, UlmOptions};
pub use viterbi::{brute_force_best_segmentation, segment_viterbi, UlmSegmenter, BRUTE_FORCE_MAX_LEN};
pub use vocab::SubwordVocab;

pub(crate) use vocab::is_single_char;

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// End-of-word symbol appended to every word before BPE.
pub const BOUNDARY_MARKER: &str = "</w>";

/// Token written in place of a character outside the trained alphabet.
pub const UNK_CHAR_TOKEN: &str = "<unk-char>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    Bpe,
    Ulm,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Bpe => "bpe",
            Algo::Ulm => "ulm",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "bpe" => Some(Algo::Bpe),
            "ulm" => Some(Algo::Ulm),
            _ => None,
        }
    }
}

/// A word rendered as an ordered sequence of subword pieces.
///
/// Pieces are vocabulary forms. A piece listed in `unknown` holds a single
/// character that the vocabulary does not cover.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Segmentation {
    word: String,
    pieces: Vec<String>,
    unknown: Vec<usize>,
}

impl Segmentation {
    pub(crate) fn new(word: &str, pieces: Vec<String>, unknown: Vec<usize>) -> Self {
        Self {
            word: word.to_owned(),
            pieces,
            unknown,
        }
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Indices of pieces standing for out-of-alphabet characters.
    pub fn unknown(&self) -> &[usize] {
        &self.unknown
    }

    pub fn is_unknown(&self, i: usize) -> bool {
        self.unknown.contains(&i)
    }

    pub fn has_unknown(&self) -> bool {
        !self.unknown.is_empty()
    }

    /// Pieces with any end-of-word marker removed.
    pub fn surface_pieces(&self) -> impl Iterator<Item = &str> {
        self.pieces
            .iter()
            .map(|p| p.strip_suffix(BOUNDARY_MARKER).unwrap_or(p))
    }

    pub fn reconstruct(&self) -> String {
        self.surface_pieces().collect()
    }
}

/// A segmentation algorithm: total over words, pure, and thread-safe.
pub trait Segmenter: Send + Sync {
    fn segment(&self, word: &str) -> Segmentation;

    fn vocab(&self) -> &SubwordVocab;
}

/// Builds the segmenter matching the vocabulary's algorithm tag. BPE needs
/// a merge table; ULM must not be given one.
pub fn build_segmenter(vocab: SubwordVocab, merges: Option<MergeTable>) -> Result<Box<dyn Segmenter>> {
    match (vocab.algo(), merges) {
        (Algo::Bpe, Some(m)) => Ok(Box::new(BpeSegmenter::new(vocab, m)?)),
        (Algo::Bpe, None) => Err(Error::param("merges", "a bpe vocabulary requires --merges")),
        (Algo::Ulm, None) => Ok(Box::new(UlmSegmenter::new(vocab)?)),
        (Algo::Ulm, Some(_)) => Err(Error::param("merges", "a ulm vocabulary takes no merges file")),
    }
}

/// Relative gap below which two total scores count as tied. Sums of the
/// same pieces in a different order can differ in the last bit, and the
/// Viterbi prefixes and the full sums of the oracle round differently.
const SCORE_TIE_TOLERANCE: f64 = 1e-12;

fn compare_scores(a: f64, b: f64) -> Ordering {
    let scale = a.abs().max(b.abs()).max(1.0);
    if (a - b).abs() <= SCORE_TIE_TOLERANCE * scale {
        Ordering::Equal
    } else {
        b.total_cmp(&a)
    }
}

/// Score ordering shared by the Viterbi decoder and the brute-force oracle:
/// higher total log-probability first, then fewer pieces, then the
/// lexicographically smaller piece sequence.
pub(crate) fn compare_candidates(
    a_score: f64,
    a_pieces: &[&str],
    b_score: f64,
    b_pieces: &[&str],
) -> Ordering {
    compare_scores(a_score, b_score)
        .then_with(|| a_pieces.len().cmp(&b_pieces.len()))
        .then_with(|| a_pieces.cmp(b_pieces))
}
