use std::collections::BTreeMap;

use proptest::prelude::*;
use subtok::corpus::{count_word_types, count_word_types_chunked, CorpusStats};
use subtok::numerics::{decode_checkpoint, encode_checkpoint, ParamSet, Tensor};
use subtok::segmentation::{
    brute_force_best_segmentation, segment_viterbi, train_bpe, train_ulm, Algo, BpeOptions, BpeSegmenter,
    MergeTable, Segmenter, SubwordVocab, UlmOptions, UlmSegmenter,
};

fn word() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[abcdé]{1,8}").unwrap()
}

fn corpus_counts() -> impl Strategy<Value = BTreeMap<String, u64>> {
    proptest::collection::btree_map(word(), 1u64..20, 1..25)
}

fn vocab() -> impl Strategy<Value = SubwordVocab> {
    let entry = (proptest::string::string_regex("[abcdé]{1,4}").unwrap(), -9.0f64..-0.1);
    proptest::collection::btree_map(entry.0, entry.1, 1..30)
        .prop_map(|m| SubwordVocab::new(Algo::Ulm, m.into_iter().collect()).unwrap())
}

fn stats(counts: &BTreeMap<String, u64>) -> CorpusStats {
    CorpusStats::from_counts(counts.iter().map(|(w, c)| (w.as_str(), *c))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn viterbi_equals_oracle(v in vocab(), w in proptest::string::string_regex("[abcdé]{1,12}").unwrap()) {
        prop_assert_eq!(segment_viterbi(&w, &v), brute_force_best_segmentation(&w, &v).unwrap());
    }

    #[test]
    fn bpe_reconstructs_training_words(counts in corpus_counts(), extra in 0usize..40, marker in any::<bool>()) {
        let st = stats(&counts);
        let floor = st.character_set().len() + usize::from(marker);
        let (v, m) = train_bpe(&st, floor + extra, BpeOptions { boundary_marker: marker }).unwrap();
        prop_assert!(v.len() <= floor + extra);
        prop_assert_eq!(v.len() - m.len(), floor);
        let seg = BpeSegmenter::new(v.clone(), m).unwrap();
        for w in counts.keys() {
            let s = seg.segment(w);
            prop_assert_eq!(s.reconstruct(), w.clone());
            prop_assert!(!s.has_unknown());
            prop_assert!(s.pieces().iter().all(|p| v.contains(p)));
        }
    }

    #[test]
    fn ulm_reconstructs_and_hits_size(counts in corpus_counts(), extra in 0usize..20) {
        let st = stats(&counts);
        let seed_size = UlmOptions::default().seed.max_seed_size;
        let target = st.character_set().len() + extra;
        let v = train_ulm(&st, target, UlmOptions::default()).unwrap();
        // Small corpora may offer fewer substrings than requested.
        prop_assert!(v.len() <= target.min(seed_size));
        prop_assert!(v.single_chars().is_superset(st.character_set()));
        let seg = UlmSegmenter::new(v).unwrap();
        for w in counts.keys() {
            let s = seg.segment(w);
            prop_assert_eq!(s.reconstruct(), w.clone());
            prop_assert!(!s.has_unknown());
        }
    }

    #[test]
    fn vocab_and_merges_files_round_trip(counts in corpus_counts(), extra in 0usize..30) {
        let st = stats(&counts);
        let (v, m) = train_bpe(&st, st.character_set().len() + 1 + extra, BpeOptions::default()).unwrap();
        let v2 = SubwordVocab::parse(&v.to_file_string()).unwrap();
        prop_assert_eq!(v2.to_file_string(), v.to_file_string());
        prop_assert_eq!(MergeTable::parse(&m.to_file_string()).unwrap(), m);
        let u = train_ulm(&st, st.character_set().len() + extra, UlmOptions::default()).unwrap();
        let u2 = SubwordVocab::parse(&u.to_file_string()).unwrap();
        prop_assert_eq!(u2.entries(), u.entries());
    }

    #[test]
    fn chunked_counting_matches_streaming(lines in proptest::collection::vec("[ab ]{0,12}", 0..30), chunk in 1usize..7) {
        let text = lines.join("\n");
        let whole = count_word_types(text.as_bytes()).unwrap();
        let chunked = count_word_types_chunked(&text, chunk);
        prop_assert_eq!(whole.word_types(), chunked.word_types());
        prop_assert_eq!(whole.total_tokens(), chunked.total_tokens());
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
        let mut ps = ParamSet::<f64>::new();
        let n = values.len();
        ps.add("w", Tensor::from_vec(vec![n], values.clone()).unwrap()).unwrap();
        ps.add("s", Tensor::scalar(values[0])).unwrap();
        let bytes = encode_checkpoint("{}", &ps).unwrap();
        let back = decode_checkpoint(&bytes).unwrap().to_params::<f64>().unwrap();
        for (a, b) in ps.iter().zip(back.iter()) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(a.value.shape(), b.value.shape());
            let same = a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits());
            prop_assert!(same);
        }
    }
}
