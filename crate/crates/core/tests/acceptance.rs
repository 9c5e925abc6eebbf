//! One line per acceptance criterion, written straight to stdout so it shows
//! up without `--nocapture`. Criteria run one after another inside a single
//! test so the timed ones do not compete for the CPU.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subtok::analysis::{segmentation_consistency, vocab_overlap, OverlapOptions};
use subtok::lm::{perplexity, train, unigram_baseline_ppl, LmConfig, LmModel, OutputVocab, TrainConfig};
use subtok::segmentation::{
    brute_force_best_segmentation, build_seed_vocab, em_step, segment_viterbi, train_bpe, Algo, BpeOptions,
    BpeSegmenter, SeedVocabParams, Segmenter, SubwordVocab, UlmSegmenter,
};

use common::gradients::{composer_case, lm_case, op_cases};
use common::{bpe, toy_stats, toy_train, toy_valid, ulm};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    let tag = if result.pass { "PASS" } else { "FAIL" };
    let line = format!("{tag} {name}: {} [{:.2}s]\n", result.detail, start.elapsed().as_secs_f64());
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    result.pass
}

fn random_vocab(rng: &mut ChaCha8Rng) -> SubwordVocab {
    const ALPHABET: [char; 5] = ['a', 'b', 'c', 'd', 'é'];
    let tied = rng.gen_bool(0.5);
    let score = |rng: &mut ChaCha8Rng| {
        if tied {
            -0.5 * rng.gen_range(1..8) as f64
        } else {
            -rng.gen_range(0.5..8.0)
        }
    };
    let mut entries = Vec::new();
    for c in ALPHABET {
        // Occasionally leave a character out to exercise unknown pieces.
        if rng.gen_bool(0.93) {
            entries.push((c.to_string(), score(rng)));
        }
    }
    for _ in 0..rng.gen_range(0..40) {
        let len = rng.gen_range(2..=5);
        let form: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect();
        if !entries.iter().any(|(f, _)| *f == form) {
            entries.push((form, score(rng)));
        }
    }
    SubwordVocab::new(Algo::Ulm, entries).unwrap()
}

fn viterbi_matches_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let start = Instant::now();
    let pairs = 3000;
    let mut mismatches = 0;
    for _ in 0..pairs {
        let vocab = random_vocab(&mut rng);
        let len = rng.gen_range(1..=12);
        let word: String = (0..len)
            .map(|_| *['a', 'b', 'c', 'd', 'é'].choose(&mut rng).unwrap())
            .collect();
        if segment_viterbi(&word, &vocab) != brute_force_best_segmentation(&word, &vocab).unwrap() {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 10.0,
        format!("{pairs} pairs, {mismatches} mismatches, {secs:.2}s (limit 10s)"),
    )
}

fn bpe_golden_and_determinism() -> Outcome {
    let stats = subtok::corpus::CorpusStats::from_counts([("ab", 3u64), ("abc", 2)]).unwrap();
    let opts = BpeOptions {
        boundary_marker: false,
    };
    let (_, merges) = train_bpe(&stats, 5, opts).unwrap();
    let trace_ok = merges.rules() == [("a".to_string(), "b".to_string()), ("ab".to_string(), "c".to_string())];
    let (v1, m1) = bpe(500);
    let (v2, m2) = bpe(500);
    let same = v1.to_file_string() == v2.to_file_string() && m1.to_file_string() == m2.to_file_string();
    outcome(
        trace_ok && same,
        format!("trace {:?}, repeated BPE-500 byte-identical: {same}", merges.rules()),
    )
}

fn em_monotone() -> Outcome {
    let params = SeedVocabParams {
        max_subword_len: 8,
        max_seed_size: 200,
    };
    let mut vocab = build_seed_vocab(toy_stats(), params).unwrap();
    let mut lls = Vec::new();
    for _ in 0..20 {
        let (next, ll) = em_step(&vocab, toy_stats()).unwrap();
        lls.push(ll);
        vocab = next;
    }
    lls.push(em_step(&vocab, toy_stats()).unwrap().1);
    let worst = lls
        .windows(2)
        .map(|w| (w[0] - w[1]) / w[0].abs())
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        worst <= 1e-9,
        format!(
            "seed {} entries, LL {:.4} -> {:.4}, largest relative drop {worst:.3e}",
            200,
            lls[0],
            lls[20]
        ),
    )
}

fn ulm_sizes_exact() -> Outcome {
    let chars = toy_stats().character_set();
    let mut parts = Vec::new();
    let mut ok = true;
    for size in [500, 1000, 2000] {
        let v = ulm(size);
        let covers = v.single_chars().is_superset(chars);
        ok &= v.len() == size && covers;
        parts.push(format!("{size}->{} chars {}", v.len(), if covers { "ok" } else { "missing" }));
    }
    outcome(ok, parts.join(", "))
}

fn reconstruction_complete() -> Outcome {
    let tokens: Vec<&str> = toy_train()
        .sentences()
        .iter()
        .flat_map(|s| s.words().iter().map(String::as_str))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let sample: Vec<&str> = (0..10_000).map(|_| *tokens.choose(&mut rng).unwrap()).collect();
    let (bv, bm) = bpe(500);
    let segmenters: Vec<Box<dyn Segmenter>> = vec![
        Box::new(BpeSegmenter::new(bv, bm).unwrap()),
        Box::new(UlmSegmenter::new(ulm(500)).unwrap()),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for s in &segmenters {
        let good = sample.iter().filter(|w| s.segment(w).reconstruct() == **w).count();
        ok &= good == sample.len();
        parts.push(format!("{} {good}/{}", s.vocab().algo().name(), sample.len()));
    }
    outcome(ok, parts.join(", "))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut cases = op_cases(0);
    cases.push(composer_case(0));
    cases.push(lm_case(0));
    let mut worst = (0.0f64, String::new());
    let mut failed = Vec::new();
    for case in &cases {
        let r = case.check();
        if r.max_rel_error > worst.0 {
            worst = (r.max_rel_error, case.name.clone());
        }
        if !r.passed() {
            failed.push(case.name.clone());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failed.is_empty() && secs < 60.0,
        format!(
            "{} checks, worst {:.2e} ({}), failed {:?}, {secs:.2}s (limit 60s)",
            cases.len(),
            worst.0,
            worst.1,
            failed
        ),
    )
}

fn analytic_perplexity() -> Outcome {
    let (vocab, merges) = bpe(500);
    let output = OutputVocab::from_stats(toy_stats(), 97);
    let config = LmConfig {
        zero_output_init: true,
        ..LmConfig::toy()
    };
    let model: LmModel<f64> = LmModel::new(config, vocab, Some(merges), output, 3).unwrap();
    let v_out = model.output_vocab().len();
    let r = perplexity(&model, toy_valid(), 64).unwrap();
    let nll = r.combined.ln();
    let ok = v_out == 100
        && (nll - 100f64.ln()).abs() < 1e-6
        && [r.forward, r.backward, r.combined].iter().all(|p| (p - 100.0).abs() < 1e-6);
    outcome(
        ok,
        format!("V_out {v_out}, NLL {nll:.9} (log 100 = {:.9}), PPL {:.9}", 100f64.ln(), r.combined),
    )
}

fn toy_training() -> Outcome {
    let (vocab, merges) = bpe(500);
    let config = LmConfig::toy();
    let output = OutputVocab::from_stats(toy_stats(), config.max_output_words);
    let baseline = unigram_baseline_ppl(&output, toy_train()).unwrap();
    let mut model: LmModel<f32> = LmModel::new(config, vocab, Some(merges), output, 1).unwrap();
    let cfg = TrainConfig::toy(1);
    let start = Instant::now();
    let report = train(&mut model, toy_train(), None, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ppl: Vec<f64> = report.epochs.iter().map(|e| e.train_ppl).collect();
    let decreasing = ppl[..5].windows(2).all(|w| w[1] < w[0]);
    let last = *ppl.last().unwrap();
    let evaluated = perplexity(&model.cast::<f64>().unwrap(), toy_train(), 64).unwrap().combined;
    outcome(
        decreasing && last < baseline && evaluated < baseline && secs < 60.0,
        format!(
            "epochs 1-5 {:?}, final {last:.3}, re-evaluated {evaluated:.3}, unigram {baseline:.3}, {secs:.1}s (limit 60s)",
            ppl[..5].iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn consistency_exact() -> Outcome {
    let (bv, bm) = bpe(500);
    let b = segmentation_consistency(&BpeSegmenter::new(bv, bm).unwrap(), toy_train());
    let u = segmentation_consistency(&UlmSegmenter::new(ulm(500)).unwrap(), toy_train());
    outcome(
        b.fraction == 1.0 && u.fraction == 1.0,
        format!("bpe {} over {} types, ulm {} over {} types", b.fraction, b.word_types, u.fraction, u.word_types),
    )
}

fn overlap_in_range() -> Outcome {
    let first = vocab_overlap(&bpe(500).0, &ulm(500), OverlapOptions::default());
    let second = vocab_overlap(&bpe(500).0, &ulm(500), OverlapOptions::default());
    outcome(
        first.rate > 0.0 && first.rate < 1.0 && first == second,
        format!(
            "{} shared of {}, rate {:.4}, rerun identical: {}",
            first.shared_count,
            first.size_a.min(first.size_b),
            first.rate,
            first == second
        ),
    )
}

fn cli_goldens() -> Outcome {
    let checks = common::run_cli_goldens();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.ok)
        .map(|c| format!("{} ({})", c.name, c.detail))
        .collect();
    outcome(
        failed.is_empty(),
        format!("{}/{} fixtures identical {failed:?}", checks.len() - failed.len(), checks.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let results = [
        criterion("viterbi equals brute-force oracle", viterbi_matches_brute_force),
        criterion("bpe golden merge trace and byte-identical output", bpe_golden_and_determinism),
        criterion("em log-likelihood non-decreasing over 20 steps", em_monotone),
        criterion("ulm returns exact sizes with full character set", ulm_sizes_exact),
        criterion("reconstruction of 10000 sampled tokens", reconstruction_complete),
        criterion("gradient suite within 1e-4", gradient_suite),
        criterion("zero output affine gives perplexity 100", analytic_perplexity),
        criterion("toy bilstm training", toy_training),
        criterion("segmentation consistency is 1.0", consistency_exact),
        criterion("bpe-500 vs ulm-500 overlap strictly inside (0,1)", overlap_in_range),
        criterion("cli golden files", cli_goldens),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
