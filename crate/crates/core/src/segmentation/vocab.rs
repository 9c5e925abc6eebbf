use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::Algo;

const VOCAB_MAGIC: &str = "#subtok-vocab";
const VOCAB_VERSION: &str = "v1";

/// Subword inventory with one goodness score per entry.
///
/// Entries are kept in canonical order (descending score, then form), which
/// is also the id order. For unigram vocabularies the score is a natural-log
/// probability; for BPE it is the frequency at which the entry was created.
#[derive(Clone, Debug, PartialEq)]
pub struct SubwordVocab {
    algo: Algo,
    entries: Vec<(String, f64)>,
    index: HashMap<String, usize>,
    max_piece_chars: usize,
}

pub(crate) fn canonical_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

pub(crate) fn is_single_char(form: &str) -> bool {
    let mut it = form.chars();
    it.next().is_some() && it.next().is_none()
}

impl SubwordVocab {
    pub fn new(algo: Algo, mut entries: Vec<(String, f64)>) -> Result<Self> {
        for (form, score) in &entries {
            if form.is_empty() {
                return Err(Error::param("vocab", "empty subword form"));
            }
            if form.chars().any(|c| c.is_ascii_whitespace()) {
                return Err(Error::param(
                    "vocab",
                    format!("subword {form:?} contains whitespace"),
                ));
            }
            if score.is_nan() {
                return Err(Error::param("vocab", format!("subword {form:?} has NaN score")));
            }
        }
        entries.sort_by(canonical_order);
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (form, _)) in entries.iter().enumerate() {
            if index.insert(form.clone(), i).is_some() {
                return Err(Error::param("vocab", format!("duplicate subword {form:?}")));
            }
        }
        let max_piece_chars = entries
            .iter()
            .map(|(f, _)| f.chars().count())
            .max()
            .unwrap_or(0);
        Ok(Self {
            algo,
            entries,
            index,
            max_piece_chars,
        })
    }

    pub fn algo(&self) -> Algo {
        self.algo
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(f, _)| f.as_str())
    }

    pub fn id(&self, form: &str) -> Option<usize> {
        self.index.get(form).copied()
    }

    pub fn form(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(|(f, _)| f.as_str())
    }

    pub fn score(&self, form: &str) -> Option<f64> {
        self.id(form).map(|i| self.entries[i].1)
    }

    pub fn contains(&self, form: &str) -> bool {
        self.index.contains_key(form)
    }

    pub fn contains_char(&self, c: char) -> bool {
        let mut buf = [0u8; 4];
        self.contains(c.encode_utf8(&mut buf))
    }

    pub fn max_piece_chars(&self) -> usize {
        self.max_piece_chars
    }

    pub fn single_chars(&self) -> BTreeSet<char> {
        self.forms()
            .filter(|f| is_single_char(f))
            .filter_map(|f| f.chars().next())
            .collect()
    }

    pub fn num_multi_char(&self) -> usize {
        self.forms().filter(|f| !is_single_char(f)).count()
    }

    /// `ln Σ exp(score)`; zero for a normalized unigram vocabulary.
    pub fn log_mass(&self) -> f64 {
        log_sum_exp(self.entries.iter().map(|(_, s)| *s))
    }

    /// Shifts unigram scores so that the probabilities sum to one.
    pub fn renormalized(&self) -> Self {
        let z = self.log_mass();
        let entries = self
            .entries
            .iter()
            .map(|(f, s)| (f.clone(), s - z))
            .collect();
        Self::new(self.algo, entries).expect("renormalizing keeps a valid vocab")
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "{VOCAB_MAGIC} {VOCAB_VERSION} algo={} size={}\n",
            self.algo.name(),
            self.len()
        );
        for (form, score) in &self.entries {
            let _ = writeln!(out, "{form}\t{score}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("vocab file", 1, "missing header"))?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 4 || fields[0] != VOCAB_MAGIC {
            return Err(Error::format("vocab file", 1, format!("bad header {header:?}")));
        }
        if fields[1] != VOCAB_VERSION {
            return Err(Error::format(
                "vocab file",
                1,
                format!("unsupported version {:?}", fields[1]),
            ));
        }
        let algo = fields[2]
            .strip_prefix("algo=")
            .and_then(Algo::from_name)
            .ok_or_else(|| Error::format("vocab file", 1, format!("bad algo {:?}", fields[2])))?;
        let size: usize = fields[3]
            .strip_prefix("size=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("vocab file", 1, format!("bad size {:?}", fields[3])))?;
        let mut entries = Vec::with_capacity(size);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let (form, score) = line
                .split_once('\t')
                .ok_or_else(|| Error::format("vocab file", lineno, "expected subword<TAB>score"))?;
            let score: f64 = score
                .parse()
                .map_err(|_| Error::format("vocab file", lineno, format!("bad score {score:?}")))?;
            entries.push((form.to_owned(), score));
        }
        if entries.len() != size {
            return Err(Error::format(
                "vocab file",
                1,
                format!("header declares {size} entries, found {}", entries.len()),
            ));
        }
        Self::new(algo, entries).map_err(|e| Error::format("vocab file", 0, e.to_string()))
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

    /// Hex SHA-256 of the serialized vocabulary.
    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.to_file_string().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ulm(entries: &[(&str, f64)]) -> SubwordVocab {
        SubwordVocab::new(
            Algo::Ulm,
            entries.iter().map(|(f, p)| (f.to_string(), p.ln())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn canonical_order_is_score_then_form() {
        let v = ulm(&[("b", 0.25), ("ab", 0.5), ("a", 0.25)]);
        assert_eq!(v.forms().collect::<Vec<_>>(), ["ab", "a", "b"]);
        assert_eq!(v.id("a"), Some(1));
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        let dup = vec![("a".to_string(), 0.0), ("a".to_string(), -1.0)];
        assert!(SubwordVocab::new(Algo::Ulm, dup).is_err());
        assert!(SubwordVocab::new(Algo::Ulm, vec![(String::new(), 0.0)]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let v = ulm(&[("a", 0.3), ("b", 0.3), ("ab", 0.4)]);
        let text = v.to_file_string();
        assert!(text.starts_with("#subtok-vocab v1 algo=ulm size=3\nab\t"));
        assert_eq!(SubwordVocab::parse(&text).unwrap(), v);
    }

    #[test]
    fn parse_rejects_other_version() {
        let err = SubwordVocab::parse("#subtok-vocab v2 algo=bpe size=1\na\t1\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn parse_rejects_size_mismatch() {
        assert!(SubwordVocab::parse("#subtok-vocab v1 algo=bpe size=2\na\t1\n").is_err());
    }

    #[test]
    fn log_mass_of_normalized_vocab_is_zero() {
        let v = ulm(&[("a", 0.3), ("b", 0.3), ("ab", 0.4)]);
        assert!(v.log_mass().abs() < 1e-12);
    }

    #[test]
    fn log_add_matches_direct() {
        let (a, b) = (0.3f64.ln(), 0.2f64.ln());
        assert!((log_add(a, b) - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, a), a);
    }
}
