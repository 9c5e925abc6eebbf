//! Vocabulary overlap and segmentation consistency.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::SentenceStream;
use crate::segmentation::{is_single_char, Segmenter, SubwordVocab, BOUNDARY_MARKER};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OverlapOptions {
    /// Drop single-character entries from both sides before comparing.
    pub exclude_single_chars: bool,
    /// Compare surface forms, with the BPE end-of-word marker removed.
    pub strip_marker: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapReport {
    pub vocab_a: String,
    pub vocab_b: String,
    pub size_a: usize,
    pub size_b: usize,
    pub shared_count: usize,
    pub rate: f64,
    pub exclude_single_chars: bool,
    pub strip_marker: bool,
}

impl OverlapReport {
    pub const TSV_HEADER: &'static str = "vocab_a\tvocab_b\tsize_a\tsize_b\tshared\trate";

    /// Header plus one row; the rate is a percentage with one decimal.
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\n{}\t{}\t{}\t{}\t{}\t{:.1}%\n",
            Self::TSV_HEADER,
            self.vocab_a,
            self.vocab_b,
            self.size_a,
            self.size_b,
            self.shared_count,
            100.0 * self.rate
        )
    }
}

/// `algo-size`, e.g. `bpe-500`.
pub fn vocab_label(v: &SubwordVocab) -> String {
    format!("{}-{}", v.algo().name(), v.len())
}

fn compared_forms(v: &SubwordVocab, opts: OverlapOptions) -> BTreeSet<&str> {
    v.forms()
        .map(|f| {
            if opts.strip_marker {
                f.strip_suffix(BOUNDARY_MARKER).unwrap_or(f)
            } else {
                f
            }
        })
        .filter(|f| !f.is_empty())
        .filter(|f| !(opts.exclude_single_chars && is_single_char(f)))
        .collect()
}

/// Shared entries over the vocabulary size when both sides have the same
/// size, otherwise over the smaller size. Sizes are counted after the
/// filters in `opts`.
pub fn vocab_overlap(a: &SubwordVocab, b: &SubwordVocab, opts: OverlapOptions) -> OverlapReport {
    let fa = compared_forms(a, opts);
    let fb = compared_forms(b, opts);
    let shared = fa.intersection(&fb).count();
    let denom = fa.len().min(fb.len());
    OverlapReport {
        vocab_a: vocab_label(a),
        vocab_b: vocab_label(b),
        size_a: fa.len(),
        size_b: fb.len(),
        shared_count: shared,
        rate: if denom == 0 { 0.0 } else { shared as f64 / denom as f64 },
        exclude_single_chars: opts.exclude_single_chars,
        strip_marker: opts.strip_marker,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TypeConsistency {
    pub word: String,
    pub occurrences: u64,
    pub distinct_segmentations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub algo: String,
    pub word_types: usize,
    pub consistent_types: usize,
    /// Fraction of word types with exactly one observed segmentation.
    pub fraction: f64,
    pub types: Vec<TypeConsistency>,
}

impl ConsistencyReport {
    /// Summary line, then one `word<TAB>occurrences<TAB>distinct` row per
    /// type in lexicographic order.
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "# algo={} word_types={} consistent={} fraction={:.6}\nword\toccurrences\tdistinct_segmentations\n",
            self.algo, self.word_types, self.consistent_types, self.fraction
        );
        for t in &self.types {
            let _ = writeln!(out, "{}\t{}\t{}", t.word, t.occurrences, t.distinct_segmentations);
        }
        out
    }
}

/// Segments every token occurrence and counts distinct piece sequences per
/// word type.
pub fn segmentation_consistency(segmenter: &dyn Segmenter, corpus: &SentenceStream) -> ConsistencyReport {
    let mut seen: BTreeMap<&str, (u64, BTreeSet<Vec<String>>)> = BTreeMap::new();
    for s in corpus.sentences() {
        for w in s.words() {
            let entry = seen.entry(w.as_str()).or_default();
            entry.0 += 1;
            entry.1.insert(segmenter.segment(w).pieces().to_vec());
        }
    }
    let types: Vec<TypeConsistency> = seen
        .into_iter()
        .map(|(w, (n, segs))| TypeConsistency {
            word: w.to_string(),
            occurrences: n,
            distinct_segmentations: segs.len(),
        })
        .collect();
    let consistent = types.iter().filter(|t| t.distinct_segmentations == 1).count();
    ConsistencyReport {
        algo: segmenter.vocab().algo().name().to_string(),
        word_types: types.len(),
        consistent_types: consistent,
        fraction: if types.is_empty() {
            1.0
        } else {
            consistent as f64 / types.len() as f64
        },
        types,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;
    use crate::segmentation::{Algo, UlmSegmenter};

    fn vocab(forms: &[&str]) -> SubwordVocab {
        SubwordVocab::new(Algo::Ulm, forms.iter().map(|f| (f.to_string(), -1.0)).collect()).unwrap()
    }

    #[test]
    fn identical_vocabs_overlap_fully() {
        let a = vocab(&["a", "b", "ab"]);
        let r = vocab_overlap(&a, &a, OverlapOptions::default());
        assert_eq!(r.shared_count, 3);
        assert_eq!(r.rate, 1.0);
    }

    #[test]
    fn half_overlap() {
        let a = vocab(&["a", "b", "c", "d"]);
        let b = vocab(&["a", "b", "x", "y"]);
        let r = vocab_overlap(&a, &b, OverlapOptions::default());
        assert_eq!((r.shared_count, r.rate), (2, 0.5));
        assert_eq!(r.to_tsv().lines().nth(1).unwrap(), "ulm-4\tulm-4\t4\t4\t2\t50.0%");
        let r = vocab_overlap(&b, &a, OverlapOptions::default());
        assert_eq!(r.shared_count, 2);
    }

    #[test]
    fn unequal_sizes_use_smaller() {
        let a = vocab(&["a", "b", "ab", "ba"]);
        let b = vocab(&["a", "b"]);
        assert_eq!(vocab_overlap(&a, &b, OverlapOptions::default()).rate, 1.0);
        let opts = OverlapOptions {
            exclude_single_chars: true,
            strip_marker: false,
        };
        let r = vocab_overlap(&a, &b, opts);
        assert_eq!((r.shared_count, r.rate), (0, 0.0));
    }

    #[test]
    fn one_type_one_row() {
        let seg = UlmSegmenter::new(vocab(&["a", "b", "ab"])).unwrap();
        let corpus: SentenceStream = ["ab ab", "ab"].iter().filter_map(|l| Sentence::from_line(l)).collect();
        let r = segmentation_consistency(&seg, &corpus);
        assert_eq!(r.types.len(), 1);
        assert_eq!(r.types[0].occurrences, 3);
        assert_eq!(r.fraction, 1.0);
    }
}
