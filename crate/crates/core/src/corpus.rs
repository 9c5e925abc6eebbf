//! Corpus ingestion: word-type counting and sentence streaming over
//! pre-tokenized, newline-delimited UTF-8 text.
//!
//! No normalization is applied. Words are split on ASCII whitespace and
//! blank lines are skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};

/// Aggregate word-type statistics of a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    word_types: BTreeMap<String, u64>,
    total_tokens: u64,
    character_set: BTreeSet<char>,
}

impl CorpusStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds stats from `(form, count)` pairs. Zero counts are dropped and
    /// repeated forms are summed.
    pub fn from_counts<S: AsRef<str>>(counts: impl IntoIterator<Item = (S, u64)>) -> Result<Self> {
        let mut stats = Self::new();
        for (form, count) in counts {
            let form = form.as_ref();
            if form.is_empty() || form.chars().any(|c| c.is_ascii_whitespace()) {
                return Err(Error::param(
                    "word",
                    format!("word form {form:?} is empty or contains whitespace"),
                ));
            }
            stats.add(form, count);
        }
        Ok(stats)
    }

    fn add(&mut self, form: &str, count: u64) {
        if count == 0 {
            return;
        }
        match self.word_types.get_mut(form) {
            Some(c) => *c += count,
            None => {
                self.character_set.extend(form.chars());
                self.word_types.insert(form.to_owned(), count);
            }
        }
        self.total_tokens += count;
    }

    pub fn add_line(&mut self, line: &str) {
        for word in split_words(line) {
            self.add(word, 1);
        }
    }

    /// Folds another chunk's counts into this one. Merging is commutative,
    /// so chunked counting matches a single pass exactly.
    pub fn merge(&mut self, other: &CorpusStats) {
        for (form, &count) in &other.word_types {
            self.add(form, count);
        }
    }

    pub fn word_types(&self) -> &BTreeMap<String, u64> {
        &self.word_types
    }

    pub fn count(&self, form: &str) -> u64 {
        self.word_types.get(form).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn character_set(&self) -> &BTreeSet<char> {
        &self.character_set
    }

    pub fn num_types(&self) -> usize {
        self.word_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_types.is_empty()
    }

    /// Word types sorted by descending count, then lexicographic form.
    pub fn sorted_by_count(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self
            .word_types
            .iter()
            .map(|(w, &c)| (w.as_str(), c))
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    /// `form<TAB>count` lines, most frequent first.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (form, count) in self.sorted_by_count() {
            let _ = writeln!(out, "{form}\t{count}");
        }
        out
    }
}

fn split_words(line: &str) -> impl Iterator<Item = &str> {
    line.split_ascii_whitespace()
}

/// Reads lines as raw bytes and validates UTF-8, reporting the absolute byte
/// offset of the first invalid sequence.
struct Utf8Lines<R> {
    reader: R,
    offset: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> Utf8Lines<R> {
    fn new(reader: R) -> Self {
        Self {
            reader,
            offset: 0,
            buf: Vec::new(),
        }
    }
}

impl<R: BufRead> Iterator for Utf8Lines<R> {
    type Item = Result<String>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(n) => {
                let start = self.offset;
                self.offset += n;
                match std::str::from_utf8(&self.buf) {
                    Ok(s) => Some(Ok(s.trim_end_matches(['\n', '\r']).to_owned())),
                    Err(e) => Some(Err(Error::Decode {
                        offset: start + e.valid_up_to(),
                    })),
                }
            }
            Err(e) => Some(Err(Error::Stream(e))),
        }
    }
}

pub fn count_word_types<R: BufRead>(reader: R) -> Result<CorpusStats> {
    let mut stats = CorpusStats::new();
    for line in Utf8Lines::new(reader) {
        stats.add_line(&line?);
    }
    Ok(stats)
}

/// Counts each chunk independently and merges the results in order.
pub fn count_word_types_chunked(text: &str, chunk_lines: usize) -> CorpusStats {
    let lines: Vec<&str> = text.lines().collect();
    let mut total = CorpusStats::new();
    for chunk in lines.chunks(chunk_lines.max(1)) {
        let mut part = CorpusStats::new();
        for line in chunk {
            part.add_line(line);
        }
        total.merge(&part);
    }
    total
}

/// One element of a sentinel-framed sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token<'a> {
    Bos,
    Eos,
    Word(&'a str),
}

/// A non-empty sequence of words. Sentinels are implicit and can never
/// collide with a word form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    words: Vec<String>,
}

impl Sentence {
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::param("sentence", "sentence has no words"));
        }
        Ok(Self { words })
    }

    pub fn from_line(line: &str) -> Option<Self> {
        let words: Vec<String> = split_words(line).map(str::to_owned).collect();
        (!words.is_empty()).then_some(Self { words })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// `⟨bos⟩ w_1 … w_n ⟨eos⟩`.
    pub fn framed(&self) -> impl Iterator<Item = Token<'_>> + '_ {
        std::iter::once(Token::Bos)
            .chain(self.words.iter().map(|w| Token::Word(w.as_str())))
            .chain(std::iter::once(Token::Eos))
    }

    pub fn reversed(&self) -> Self {
        let mut words = self.words.clone();
        words.reverse();
        Self { words }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SentenceStream {
    sentences: Vec<Sentence>,
}

impl SentenceStream {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        Self { sentences }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_words(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn stats(&self) -> CorpusStats {
        let mut stats = CorpusStats::new();
        for s in &self.sentences {
            for w in s.words() {
                stats.add(w, 1);
            }
        }
        stats
    }
}

impl FromIterator<Sentence> for SentenceStream {
    fn from_iter<I: IntoIterator<Item = Sentence>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Lazily yields one sentence per non-blank line.
pub fn sentences<R: BufRead>(reader: R) -> impl Iterator<Item = Result<Sentence>> {
    Utf8Lines::new(reader).filter_map(|line| match line {
        Ok(l) => Sentence::from_line(&l).map(Ok),
        Err(e) => Some(Err(e)),
    })
}

pub fn stream_sentences<R: BufRead>(reader: R) -> Result<SentenceStream> {
    sentences(reader).collect::<Result<Vec<_>>>().map(SentenceStream::new)
}
