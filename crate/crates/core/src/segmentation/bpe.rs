use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::corpus::CorpusStats;
use crate::error::{Error, Result};

use super::{Algo, Segmentation, Segmenter, SubwordVocab, BOUNDARY_MARKER};

const MERGES_HEADER: &str = "#subtok-merges v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BpeOptions {
    /// Append [`BOUNDARY_MARKER`] to every word so pieces can encode
    /// word-final position.
    pub boundary_marker: bool,
}

impl Default for BpeOptions {
    fn default() -> Self {
        Self {
            boundary_marker: true,
        }
    }
}

/// Ordered BPE merge rules.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MergeTable {
    rules: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl MergeTable {
    /// Builds a table, checking that every rule's output is used as an
    /// operand only by later rules.
    pub fn new(rules: Vec<(String, String)>) -> Result<Self> {
        let mut first_output: HashMap<String, usize> = HashMap::new();
        for (k, (l, r)) in rules.iter().enumerate() {
            first_output.entry(format!("{l}{r}")).or_insert(k);
        }
        let mut ranks = HashMap::with_capacity(rules.len());
        for (k, (l, r)) in rules.iter().enumerate() {
            if l.is_empty() || r.is_empty() {
                return Err(Error::param("merges", format!("rule {k} has an empty operand")));
            }
            for operand in [l, r] {
                if let Some(&j) = first_output.get(operand) {
                    if j >= k {
                        return Err(Error::param(
                            "merges",
                            format!("rule {k} uses {operand:?} before rule {j} creates it"),
                        ));
                    }
                }
            }
            if ranks.insert((l.clone(), r.clone()), k).is_some() {
                return Err(Error::param("merges", format!("rule {k} ({l} {r}) is repeated")));
            }
        }
        Ok(Self { rules, ranks })
    }

    pub fn rules(&self) -> &[(String, String)] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rank(&self, left: &str, right: &str) -> Option<usize> {
        // Tuple keys of owned strings cannot be borrowed as (&str, &str).
        self.ranks.get(&(left.to_owned(), right.to_owned())).copied()
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!("{MERGES_HEADER}\n");
        for (l, r) in &self.rules {
            let _ = writeln!(out, "{l} {r}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == MERGES_HEADER => {}
            Some(h) => return Err(Error::format("merges file", 1, format!("bad header {h:?}"))),
            None => return Err(Error::format("merges file", 1, "missing header")),
        }
        let mut rules = Vec::new();
        for (i, line) in lines.enumerate() {
            let (l, r) = line
                .split_once(' ')
                .filter(|(l, r)| !l.is_empty() && !r.is_empty() && !r.contains(' '))
                .ok_or_else(|| Error::format("merges file", i + 2, "expected `left right`"))?;
            rules.push((l.to_owned(), r.to_owned()));
        }
        Self::new(rules).map_err(|e| Error::format("merges file", 0, e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }
}

type Pair = (u32, u32);

struct Symbols {
    forms: Vec<String>,
    index: HashMap<String, u32>,
}

impl Symbols {
    fn intern(&mut self, form: &str) -> (u32, bool) {
        if let Some(&id) = self.index.get(form) {
            return (id, false);
        }
        let id = self.forms.len() as u32;
        self.forms.push(form.to_owned());
        self.index.insert(form.to_owned(), id);
        (id, true)
    }

    fn cmp_pair(&self, a: Pair, b: Pair) -> Ordering {
        let f = &self.forms;
        f[a.0 as usize]
            .cmp(&f[b.0 as usize])
            .then_with(|| f[a.1 as usize].cmp(&f[b.1 as usize]))
    }
}

struct Word {
    symbols: Vec<u32>,
    count: u64,
}

fn merge_in_place(symbols: &mut Vec<u32>, pair: Pair, merged: u32) -> bool {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    let mut changed = false;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == pair.0 && symbols[i + 1] == pair.1 {
            out.push(merged);
            i += 2;
            changed = true;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    *symbols = out;
    changed
}

/// Greedy bigram-merge vocabulary training.
///
/// Every word type starts as single characters (plus the end-of-word marker
/// when enabled). Pair frequencies are weighted by word-type counts; the most
/// frequent pair is merged until the vocabulary reaches `target_size`. Ties
/// go to the lexicographically smallest `(left, right)`. If pairs run out
/// first, training stops early with a warning and the smaller vocabulary is
/// returned.
pub fn train_bpe(
    stats: &CorpusStats,
    target_size: usize,
    opts: BpeOptions,
) -> Result<(SubwordVocab, MergeTable)> {
    if stats.is_empty() {
        return Err(Error::param("corpus", "corpus has no words"));
    }
    let floor = stats.character_set().len() + usize::from(opts.boundary_marker);
    if target_size < floor {
        return Err(Error::param(
            "size",
            format!(
                "size {target_size} below character floor {}{}",
                stats.character_set().len(),
                if opts.boundary_marker { "(+marker)" } else { "" }
            ),
        ));
    }

    let mut symbols = Symbols {
        forms: Vec::new(),
        index: HashMap::new(),
    };
    let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
    let mut words = Vec::with_capacity(stats.num_types());
    for (form, &count) in stats.word_types() {
        if opts.boundary_marker && form.contains(BOUNDARY_MARKER) {
            return Err(Error::param(
                "corpus",
                format!("word {form:?} contains the boundary marker {BOUNDARY_MARKER:?}"),
            ));
        }
        let mut buf = [0u8; 4];
        let mut syms: Vec<u32> = form
            .chars()
            .map(|c| symbols.intern(c.encode_utf8(&mut buf)).0)
            .collect();
        if opts.boundary_marker {
            syms.push(symbols.intern(BOUNDARY_MARKER).0);
        }
        for &s in &syms {
            *scores.entry(s).or_insert(0.0) += count as f64;
        }
        words.push(Word {
            symbols: syms,
            count,
        });
    }
    let mut vocab_len = symbols.forms.len();

    let mut pair_counts: HashMap<Pair, u64> = HashMap::new();
    let mut pair_words: HashMap<Pair, BTreeSet<usize>> = HashMap::new();
    for (wi, w) in words.iter().enumerate() {
        for p in w.symbols.windows(2) {
            let pair = (p[0], p[1]);
            *pair_counts.entry(pair).or_insert(0) += w.count;
            pair_words.entry(pair).or_default().insert(wi);
        }
    }

    let mut rules = Vec::new();
    while vocab_len < target_size {
        let best = pair_counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| symbols.cmp_pair(**pb, **pa)));
        let Some((&pair, &freq)) = best else {
            warn!("BPE ran out of pairs at vocabulary size {vocab_len} (requested {target_size})");
            break;
        };
        let left = symbols.forms[pair.0 as usize].clone();
        let right = symbols.forms[pair.1 as usize].clone();
        let (merged, fresh) = symbols.intern(&format!("{left}{right}"));
        if fresh {
            vocab_len += 1;
            scores.insert(merged, freq as f64);
        }
        rules.push((left, right));

        let affected = pair_words.remove(&pair).unwrap_or_default();
        for wi in affected {
            let w = &mut words[wi];
            let before = w.symbols.clone();
            if !merge_in_place(&mut w.symbols, pair, merged) {
                continue;
            }
            for p in before.windows(2) {
                let old = (p[0], p[1]);
                if let Some(c) = pair_counts.get_mut(&old) {
                    *c -= w.count;
                    if *c == 0 {
                        pair_counts.remove(&old);
                    }
                }
            }
            for p in w.symbols.windows(2) {
                let new = (p[0], p[1]);
                *pair_counts.entry(new).or_insert(0) += w.count;
                pair_words.entry(new).or_default().insert(wi);
            }
        }
    }

    let entries = scores
        .into_iter()
        .map(|(id, score)| (symbols.forms[id as usize].clone(), score))
        .collect();
    let vocab = SubwordVocab::new(Algo::Bpe, entries)?;
    let merges = MergeTable::new(rules)?;
    Ok((vocab, merges))
}

/// Replays merge rules on a word.
///
/// The word starts as single characters (plus the end-of-word marker when
/// the vocabulary has one). The lowest-ranked applicable rule is applied to
/// all its left-to-right occurrences, repeatedly, until no rule applies.
/// Characters outside the vocabulary's alphabet become flagged pieces and
/// never merge.
pub fn segment_bpe(word: &str, vocab: &SubwordVocab, merges: &MergeTable) -> Segmentation {
    let marker = vocab.contains(BOUNDARY_MARKER);
    let mut pieces: Vec<(String, bool)> = word
        .chars()
        .map(|c| (c.to_string(), !vocab.contains_char(c)))
        .collect();
    if marker && !pieces.is_empty() {
        pieces.push((BOUNDARY_MARKER.to_owned(), false));
    }

    loop {
        let best = pieces
            .windows(2)
            .filter(|w| !w[0].1 && !w[1].1)
            .filter_map(|w| merges.rank(&w[0].0, &w[1].0))
            .min();
        let Some(rank) = best else { break };
        let (l, r) = &merges.rules()[rank];
        let mut out = Vec::with_capacity(pieces.len());
        let mut i = 0;
        while i < pieces.len() {
            if i + 1 < pieces.len()
                && !pieces[i].1
                && !pieces[i + 1].1
                && &pieces[i].0 == l
                && &pieces[i + 1].0 == r
            {
                out.push((format!("{l}{r}"), false));
                i += 2;
            } else {
                out.push(std::mem::take(&mut pieces[i]));
                i += 1;
            }
        }
        pieces = out;
    }

    let unknown = pieces
        .iter()
        .enumerate()
        .filter(|(_, p)| p.1)
        .map(|(i, _)| i)
        .collect();
    Segmentation::new(word, pieces.into_iter().map(|p| p.0).collect(), unknown)
}

/// Greedy BPE decoder bound to a trained vocabulary and merge table.
#[derive(Clone, Debug)]
pub struct BpeSegmenter {
    vocab: SubwordVocab,
    merges: MergeTable,
}

impl BpeSegmenter {
    pub fn new(vocab: SubwordVocab, merges: MergeTable) -> Result<Self> {
        if vocab.algo() != Algo::Bpe {
            return Err(Error::param("vocab", "BPE segmenter needs a bpe vocabulary"));
        }
        let produced: HashSet<String> = merges
            .rules()
            .iter()
            .map(|(l, r)| format!("{l}{r}"))
            .collect();
        for (l, r) in merges.rules() {
            for operand in [l, r] {
                if !vocab.contains(operand) && !produced.contains(operand) {
                    return Err(Error::param(
                        "merges",
                        format!("merge operand {operand:?} is not in the vocabulary"),
                    ));
                }
            }
        }
        Ok(Self { vocab, merges })
    }

    pub fn merges(&self) -> &MergeTable {
        &self.merges
    }
}

impl Segmenter for BpeSegmenter {
    fn segment(&self, word: &str) -> Segmentation {
        segment_bpe(word, &self.vocab, &self.merges)
    }

    fn vocab(&self) -> &SubwordVocab {
        &self.vocab
    }
}
