//! Bidirectional LSTM language model over composed word vectors.
//!
//! The forward direction reads `<bos> w_1 … w_n` and predicts
//! `w_1 … w_n <eos>`; the backward direction reads `<eos> w_n … w_1` and
//! predicts `w_n … w_1 <bos>`. Both share the subword composer and one output
//! affine layer over a closed word vocabulary. Sentinel inputs have their own
//! learned vectors and bypass the composer.

mod io;
mod train;

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composer::{BoundComposer, Composer, ComposerConfig};
use crate::corpus::{CorpusStats, Sentence};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::scalar::Scalar;
use crate::segmentation::{build_segmenter, MergeTable, Segmenter, SubwordVocab};

pub use io::{format_embeddings, load_model, model_manifest, save_model, ModelManifest, EMBEDDINGS_HEADER};
pub use train::{
    batches, perplexity, train, unigram_baseline_ppl, EpochStats, OptimizerKind, PerplexityReport, TrainConfig,
    TrainReport,
};

pub const UNK_WORD: &str = "<unk>";
pub const BOS_WORD: &str = "<bos>";
pub const EOS_WORD: &str = "<eos>";
pub const UNK_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
const NUM_SPECIAL: usize = 3;

/// Closed output vocabulary: `<unk>`, `<bos>`, `<eos>`, then the most frequent
/// training words (count descending, then form).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl OutputVocab {
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if [UNK_WORD, BOS_WORD, EOS_WORD].contains(&w.as_str()) {
                return Err(Error::param("output vocab", format!("{w} is reserved")));
            }
            if index.insert(w.clone(), i + NUM_SPECIAL).is_some() {
                return Err(Error::param("output vocab", format!("duplicate word {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn from_stats(stats: &CorpusStats, max_words: usize) -> Self {
        let words = stats
            .sorted_by_count()
            .into_iter()
            .filter(|(w, _)| ![UNK_WORD, BOS_WORD, EOS_WORD].contains(w))
            .take(max_words)
            .map(|(w, _)| w.to_string())
            .collect();
        Self::from_words(words).expect("corpus word types are unique")
    }

    /// `V_out`, including the three reserved entries.
    pub fn len(&self) -> usize {
        self.words.len() + NUM_SPECIAL
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Non-reserved words in id order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn form(&self, id: usize) -> Option<&str> {
        match id {
            UNK_ID => Some(UNK_WORD),
            BOS_ID => Some(BOS_WORD),
            EOS_ID => Some(EOS_WORD),
            _ => self.words.get(id - NUM_SPECIAL).map(String::as_str),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmConfig {
    pub composer: ComposerConfig,
    pub hidden: usize,
    pub layers: usize,
    pub max_output_words: usize,
    /// Start the output affine at zero, giving uniform predictions.
    pub zero_output_init: bool,
}

impl LmConfig {
    /// d_sub 16, d_cnn 48, h 64, two layers per direction.
    pub fn toy() -> Self {
        Self {
            composer: ComposerConfig::toy(),
            hidden: 64,
            layers: 2,
            max_output_words: 5000,
            zero_output_init: false,
        }
    }

    pub fn d_cnn(&self) -> usize {
        self.composer.d_cnn()
    }

    /// Width of a contextual embedding: input vector plus both top states.
    pub fn embedding_dim(&self) -> usize {
        self.d_cnn() + 2 * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        self.composer.validate()?;
        if self.hidden == 0 {
            return Err(Error::param("hidden", "must be positive"));
        }
        if self.layers == 0 {
            return Err(Error::param("layers", "must be positive"));
        }
        Ok(())
    }
}

/// One LSTM layer: `z = x W + h U + b`, gates in the order input, forget,
/// cell, output.
#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }
}

pub struct LmModel<T> {
    config: LmConfig,
    vocab: SubwordVocab,
    merges: Option<MergeTable>,
    segmenter: Box<dyn Segmenter>,
    output: OutputVocab,
    pub params: ParamSet<T>,
    composer: Composer,
    /// Row 0 is the `<bos>` input vector, row 1 `<eos>`.
    pub sentinels: ParamId,
    pub forward_lstm: Vec<LstmLayer>,
    pub backward_lstm: Vec<LstmLayer>,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Word-to-piece-id memo; segmentation is pure, so entries never go stale.
#[derive(Debug, Default)]
pub struct PieceCache {
    ids: HashMap<String, Vec<usize>>,
}

impl PieceCache {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Graph nodes produced by one batched forward pass.
pub struct BatchOutput {
    /// `Σ −log p(target)` over both directions.
    pub nll_sum: Var,
    /// Mean NLL: `nll_sum / num_predictions`.
    pub loss: Var,
    /// Log-softmax rows: forward rows first (timestep-major, then batch
    /// position), then backward rows in the same layout.
    pub log_probs: Var,
    pub targets: Vec<usize>,
    pub rows_per_direction: usize,
    /// Input vectors: sentinel rows then one row per distinct word.
    pub inputs: Var,
    /// `word_rows[b][i]` is the row of `inputs` holding word `i` of
    /// sentence `b`.
    pub word_rows: Vec<Vec<usize>>,
    /// Top-layer hidden states, `batch × h` per timestep.
    pub forward_top: Vec<Var>,
    pub backward_top: Vec<Var>,
}

impl BatchOutput {
    pub fn num_predictions(&self) -> usize {
        self.targets.len()
    }
}

const BOS_ROW: usize = 0;
const EOS_ROW: usize = 1;

fn lstm_param_names(dir: Direction, layer: usize) -> [String; 3] {
    let p = format!("lstm.{}.l{layer}", dir.tag());
    [format!("{p}.w"), format!("{p}.u"), format!("{p}.b")]
}

impl<T: Scalar> LmModel<T> {
    /// A freshly initialized model; all randomness comes from `seed`.
    pub fn new(
        config: LmConfig,
        vocab: SubwordVocab,
        merges: Option<MergeTable>,
        output: OutputVocab,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let segmenter = build_segmenter(vocab.clone(), merges.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let composer = Composer::new(config.composer.clone(), vocab.len(), &mut params, &mut rng, "composer")?;
        let d_cnn = config.d_cnn();
        let h = config.hidden;
        let sentinels = params.add_uniform("sentinels", &[2, d_cnn], 1.0 / (d_cnn as f64).sqrt(), &mut rng)?;
        let scale = 1.0 / (h as f64).sqrt();
        let mut stacks = Vec::new();
        for dir in [Direction::Forward, Direction::Backward] {
            let mut layers = Vec::with_capacity(config.layers);
            for l in 0..config.layers {
                let input = if l == 0 { d_cnn } else { h };
                let [wn, un, bn] = lstm_param_names(dir, l);
                let w = params.add_uniform(wn, &[input, 4 * h], scale, &mut rng)?;
                let u = params.add_uniform(un, &[h, 4 * h], scale, &mut rng)?;
                // Forget-gate bias starts at 1.
                let mut bias = Tensor::zeros(&[4 * h]);
                bias.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = T::one());
                let b = params.add(bn, bias)?;
                layers.push(LstmLayer { w, u, b });
            }
            stacks.push(layers);
        }
        let v_out = output.len();
        let (out_w, out_b) = if config.zero_output_init {
            (
                params.add("output.w", Tensor::zeros(&[h, v_out]))?,
                params.add("output.b", Tensor::zeros(&[v_out]))?,
            )
        } else {
            (
                params.add_uniform("output.w", &[h, v_out], scale, &mut rng)?,
                params.add("output.b", Tensor::zeros(&[v_out]))?,
            )
        };
        let backward_lstm = stacks.pop().expect("two directions");
        let forward_lstm = stacks.pop().expect("two directions");
        Ok(Self {
            config,
            vocab,
            merges,
            segmenter,
            output,
            params,
            composer,
            sentinels,
            forward_lstm,
            backward_lstm,
            out_w,
            out_b,
        })
    }

    /// Rebinds a model around an existing parameter set, checking that every
    /// expected tensor is present with the right shape.
    pub fn from_parts(
        config: LmConfig,
        vocab: SubwordVocab,
        merges: Option<MergeTable>,
        output: OutputVocab,
        params: ParamSet<T>,
    ) -> Result<Self> {
        config.validate()?;
        let segmenter = build_segmenter(vocab.clone(), merges.clone())?;
        let composer = Composer::from_params(config.composer.clone(), vocab.len(), &params, "composer")?;
        let find = |name: &str, shape: &[usize]| -> Result<ParamId> {
            let id = params
                .by_name(name)
                .ok_or_else(|| Error::param("checkpoint", format!("missing parameter {name}")))?;
            if params.value(id).shape() != shape {
                return Err(Error::Shape {
                    op: "load parameter",
                    left: params.value(id).shape().to_vec(),
                    right: shape.to_vec(),
                });
            }
            Ok(id)
        };
        let d_cnn = config.d_cnn();
        let h = config.hidden;
        let sentinels = find("sentinels", &[2, d_cnn])?;
        let mut stacks = Vec::new();
        for dir in [Direction::Forward, Direction::Backward] {
            let mut layers = Vec::new();
            for l in 0..config.layers {
                let input = if l == 0 { d_cnn } else { h };
                let [wn, un, bn] = lstm_param_names(dir, l);
                layers.push(LstmLayer {
                    w: find(&wn, &[input, 4 * h])?,
                    u: find(&un, &[h, 4 * h])?,
                    b: find(&bn, &[4 * h])?,
                });
            }
            stacks.push(layers);
        }
        let out_w = find("output.w", &[h, output.len()])?;
        let out_b = find("output.b", &[output.len()])?;
        let backward_lstm = stacks.pop().expect("two directions");
        let forward_lstm = stacks.pop().expect("two directions");
        Ok(Self {
            config,
            vocab,
            merges,
            segmenter,
            output,
            params,
            composer,
            sentinels,
            forward_lstm,
            backward_lstm,
            out_w,
            out_b,
        })
    }

    /// The same model with parameters converted to another precision.
    pub fn cast<U: Scalar>(&self) -> Result<LmModel<U>> {
        let mut params = ParamSet::new();
        for p in self.params.iter() {
            params.add(p.name.clone(), p.value.cast())?;
        }
        LmModel::from_parts(
            self.config.clone(),
            self.vocab.clone(),
            self.merges.clone(),
            self.output.clone(),
            params,
        )
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn vocab(&self) -> &SubwordVocab {
        &self.vocab
    }

    pub fn merges(&self) -> Option<&MergeTable> {
        self.merges.as_ref()
    }

    pub fn segmenter(&self) -> &dyn Segmenter {
        self.segmenter.as_ref()
    }

    pub fn output_vocab(&self) -> &OutputVocab {
        &self.output
    }

    pub fn composer(&self) -> &Composer {
        &self.composer
    }

    pub fn piece_ids(&self, word: &str) -> Vec<usize> {
        self.composer.piece_ids(&self.segmenter.segment(word), &self.vocab)
    }

    fn cached_ids<'c>(&self, cache: &'c mut PieceCache, word: &str) -> &'c [usize] {
        if !cache.ids.contains_key(word) {
            let ids = self.piece_ids(word);
            cache.ids.insert(word.to_string(), ids);
        }
        &cache.ids[word]
    }

    /// Composes each distinct word of the batch once and stacks the results
    /// under the two sentinel rows.
    fn input_table(
        &self,
        g: &mut Graph<T>,
        composer: &BoundComposer,
        batch: &[&[String]],
        cache: &mut PieceCache,
    ) -> Result<(Var, Vec<Vec<usize>>)> {
        let mut rows: BTreeMap<&str, usize> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        let mut word_rows = Vec::with_capacity(batch.len());
        for sent in batch {
            let mut r = Vec::with_capacity(sent.len());
            for w in sent.iter() {
                let next = 2 + order.len();
                let row = *rows.entry(w.as_str()).or_insert_with(|| {
                    order.push(w.as_str());
                    next
                });
                r.push(row);
            }
            word_rows.push(r);
        }
        let mut parts = Vec::with_capacity(order.len() + 1);
        parts.push(g.param(&self.params, self.sentinels));
        for w in order {
            let ids = self.cached_ids(cache, w).to_vec();
            parts.push(composer.compose_word(g, &ids)?);
        }
        Ok((g.concat(&parts, 0)?, word_rows))
    }

    /// Runs one direction's LSTM stack over per-timestep input rows and
    /// returns the top layer's hidden state at every step.
    fn run_stack(
        &self,
        g: &mut Graph<T>,
        inputs: Var,
        rows_per_step: &[Vec<usize>],
        stack: &[LstmLayer],
    ) -> Result<Vec<Var>> {
        let h = self.config.hidden;
        let batch = rows_per_step[0].len();
        let mut layer_inputs: Vec<Var> = Vec::with_capacity(rows_per_step.len());
        for rows in rows_per_step {
            layer_inputs.push(g.gather_rows(inputs, rows)?);
        }
        for layer in stack {
            let w = g.param(&self.params, layer.w);
            let u = g.param(&self.params, layer.u);
            let b = g.param(&self.params, layer.b);
            let mut hidden = g.constant(Tensor::zeros(&[batch, h]));
            let mut cell = g.constant(Tensor::zeros(&[batch, h]));
            let mut outputs = Vec::with_capacity(layer_inputs.len());
            for &x in &layer_inputs {
                let xw = g.matmul(x, w)?;
                let hu = g.matmul(hidden, u)?;
                let z = g.add(xw, hu)?;
                let z = g.add_bias(z, b)?;
                let zi = g.slice(z, 1, 0, h)?;
                let zf = g.slice(z, 1, h, 2 * h)?;
                let zg = g.slice(z, 1, 2 * h, 3 * h)?;
                let zo = g.slice(z, 1, 3 * h, 4 * h)?;
                let i = g.sigmoid(zi);
                let f = g.sigmoid(zf);
                let cand = g.tanh(zg);
                let o = g.sigmoid(zo);
                let keep = g.mul(f, cell)?;
                let write = g.mul(i, cand)?;
                cell = g.add(keep, write)?;
                let squashed = g.tanh(cell);
                hidden = g.mul(o, squashed)?;
                outputs.push(hidden);
            }
            layer_inputs = outputs;
        }
        Ok(layer_inputs)
    }

    /// Forward pass over sentences of equal length.
    pub fn forward_batch(&self, g: &mut Graph<T>, batch: &[&[String]], cache: &mut PieceCache) -> Result<BatchOutput> {
        let n = batch
            .first()
            .map(|s| s.len())
            .ok_or_else(|| Error::param("batch", "empty batch"))?;
        if n == 0 {
            return Err(Error::param("sentence", "empty sentence"));
        }
        if batch.iter().any(|s| s.len() != n) {
            return Err(Error::param("batch", "sentences in a batch must have equal length"));
        }
        let composer = self.composer.bind(g, &self.params);
        let (inputs, word_rows) = self.input_table(g, &composer, batch, cache)?;

        let steps = n + 1;
        let mut fwd_rows = Vec::with_capacity(steps);
        let mut bwd_rows = Vec::with_capacity(steps);
        let mut targets = Vec::with_capacity(2 * steps * batch.len());
        for t in 0..steps {
            fwd_rows.push(
                word_rows
                    .iter()
                    .map(|r| if t == 0 { BOS_ROW } else { r[t - 1] })
                    .collect::<Vec<_>>(),
            );
            bwd_rows.push(
                word_rows
                    .iter()
                    .map(|r| if t == 0 { EOS_ROW } else { r[n - t] })
                    .collect::<Vec<_>>(),
            );
        }
        for t in 0..steps {
            for s in batch {
                targets.push(if t < n { self.output.id(&s[t]) } else { EOS_ID });
            }
        }
        for t in 0..steps {
            for s in batch {
                targets.push(if t < n { self.output.id(&s[n - 1 - t]) } else { BOS_ID });
            }
        }

        let forward_top = self.run_stack(g, inputs, &fwd_rows, &self.forward_lstm)?;
        let backward_top = self.run_stack(g, inputs, &bwd_rows, &self.backward_lstm)?;
        let all: Vec<Var> = forward_top.iter().chain(&backward_top).copied().collect();
        let hidden = g.concat(&all, 0)?;
        let ow = g.param(&self.params, self.out_w);
        let ob = g.param(&self.params, self.out_b);
        let logits = g.matmul(hidden, ow)?;
        let logits = g.add_bias(logits, ob)?;
        let log_probs = g.log_softmax(logits);
        let (nll_sum, loss) = nll_loss(g, log_probs, &targets)?;
        Ok(BatchOutput {
            nll_sum,
            loss,
            log_probs,
            rows_per_direction: steps * batch.len(),
            targets,
            inputs,
            word_rows,
            forward_top,
            backward_top,
        })
    }

    /// Forward pass over one sentence.
    pub fn forward_sentence(&self, g: &mut Graph<T>, sentence: &[String]) -> Result<BatchOutput> {
        self.forward_batch(g, &[sentence], &mut PieceCache::new())
    }

    /// Per-word contextual embeddings: `[y_i ; forward top h_i ; backward
    /// top h_i]`, where the directional states are those after reading word
    /// `i`.
    pub fn extract_embeddings(&self, sentence: &Sentence) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let out = self.forward_sentence(&mut g, sentence.words())?;
        let n = sentence.len();
        let inputs = g.value(out.inputs);
        let mut result = Vec::with_capacity(n);
        for i in 0..n {
            let mut v = Vec::with_capacity(self.config.embedding_dim());
            v.extend(inputs.row(out.word_rows[0][i]).iter().map(|x| x.as_f64()));
            v.extend(g.value(out.forward_top[i + 1]).row(0).iter().map(|x| x.as_f64()));
            v.extend(g.value(out.backward_top[n - i]).row(0).iter().map(|x| x.as_f64()));
            result.push(v);
        }
        Ok(result)
    }
}

/// `(Σ −log p, mean −log p)` over rows of `log_probs` at `targets`.
pub fn nll_loss<T: Scalar>(g: &mut Graph<T>, log_probs: Var, targets: &[usize]) -> Result<(Var, Var)> {
    let v_out = g.value(log_probs).cols();
    if let Some(&bad) = targets.iter().find(|&&t| t >= v_out) {
        return Err(Error::param("target", format!("target id {bad} out of range for V_out {v_out}")));
    }
    let picked = g.pick(log_probs, targets)?;
    let total = g.sum(picked);
    let nll_sum = g.scale(total, -T::one());
    let loss = g.scale(total, -T::one() / T::lit(targets.len() as f64));
    Ok((nll_sum, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::{train_bpe, BpeOptions};

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn tiny_model(zero_output: bool, extra_words: usize) -> LmModel<f64> {
        let text = "the cat sat on the mat\nthe dog ate the cat\n";
        let stats = crate::corpus::count_word_types_chunked(text, 10);
        let (vocab, merges) = train_bpe(&stats, 20, BpeOptions::default()).unwrap();
        let mut out_words: Vec<String> = stats.word_types().keys().cloned().collect();
        for i in 0..extra_words {
            out_words.push(format!("filler{i}"));
        }
        let config = LmConfig {
            composer: ComposerConfig {
                d_sub: 4,
                kernels: vec![
                    crate::composer::KernelSpec { width: 1, channels: 3 },
                    crate::composer::KernelSpec { width: 2, channels: 3 },
                ],
                highway_layers: 1,
                max_pieces: 24,
            },
            hidden: 5,
            layers: 2,
            max_output_words: 100,
            zero_output_init: zero_output,
        };
        LmModel::new(config, vocab, Some(merges), OutputVocab::from_words(out_words).unwrap(), 7).unwrap()
    }

    #[test]
    fn output_vocab_reserved_ids() {
        let v = OutputVocab::from_words(vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("a"), 3);
        assert_eq!(v.id("zzz"), UNK_ID);
        assert_eq!(v.form(EOS_ID), Some(EOS_WORD));
        assert!(OutputVocab::from_words(vec!["<bos>".into()]).is_err());
    }

    #[test]
    fn rows_are_normalized() {
        let m = tiny_model(false, 0);
        let mut g = Graph::new();
        let out = m.forward_sentence(&mut g, &words("the cat ate")).unwrap();
        let lp = g.value(out.log_probs);
        assert_eq!(lp.rows(), 8);
        for r in 0..lp.rows() {
            let s: f64 = lp.row(r).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_is_uniform() {
        // 7 corpus words + 90 fillers + 3 reserved = 100 outputs.
        let m = tiny_model(true, 90);
        assert_eq!(m.output_vocab().len(), 100);
        let mut g = Graph::new();
        let out = m.forward_sentence(&mut g, &words("the dog sat")).unwrap();
        assert!((g.value(out.loss).item() - 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn targets_follow_direction() {
        let m = tiny_model(false, 0);
        let mut g = Graph::new();
        let out = m.forward_sentence(&mut g, &words("the cat")).unwrap();
        let o = m.output_vocab();
        assert_eq!(
            out.targets,
            vec![o.id("the"), o.id("cat"), EOS_ID, o.id("cat"), o.id("the"), BOS_ID]
        );
    }

    #[test]
    fn forward_prediction_ignores_later_words() {
        let m = tiny_model(false, 0);
        let run = |s: &str| {
            let mut g = Graph::new();
            let out = m.forward_sentence(&mut g, &words(s)).unwrap();
            g.value(out.log_probs).clone()
        };
        let a = run("the cat sat on");
        let b = run("the cat dog mat");
        // Forward row t has read <bos> and the first t words.
        assert_eq!(a.row(0), b.row(0));
        assert_eq!(a.row(2), b.row(2));
        assert_ne!(a.row(3), b.row(3));
        // Backward row 0 reads <eos> only; row 1 adds the differing last word.
        let bwd = 5;
        assert_eq!(a.row(bwd), b.row(bwd));
        assert_ne!(a.row(bwd + 1), b.row(bwd + 1));
    }

    #[test]
    fn mirrored_weights_mirror_outputs() {
        let mut m = tiny_model(false, 0);
        for l in 0..2 {
            for (src, dst) in [
                (m.forward_lstm[l].w, m.backward_lstm[l].w),
                (m.forward_lstm[l].u, m.backward_lstm[l].u),
                (m.forward_lstm[l].b, m.backward_lstm[l].b),
            ] {
                let v = m.params.value(src).clone();
                *m.params.value_mut(dst) = v;
            }
        }
        // Same vector for both sentinels, same output scores for <bos>/<eos>.
        let bos = m.params.value(m.sentinels).row(0).to_vec();
        m.params.value_mut(m.sentinels).row_mut(1).copy_from_slice(&bos);
        let v_out = m.output_vocab().len();
        let ow = m.params.value_mut(m.out_w);
        for r in 0..ow.rows() {
            let x = ow.at(r, BOS_ID);
            ow.data_mut()[r * v_out + EOS_ID] = x;
        }
        let ob = m.params.value_mut(m.out_b);
        ob.data_mut()[EOS_ID] = ob.data()[BOS_ID];

        let s = words("the cat sat");
        let r: Vec<String> = s.iter().rev().cloned().collect();
        let mut g1 = Graph::new();
        let a = m.forward_sentence(&mut g1, &s).unwrap();
        let mut g2 = Graph::new();
        let b = m.forward_sentence(&mut g2, &r).unwrap();
        let (la, lb) = (g1.value(a.log_probs), g2.value(b.log_probs));
        let rows = a.rows_per_direction;
        for t in 0..rows {
            let fa = la.at(t, a.targets[t]);
            let bb = lb.at(rows + t, b.targets[rows + t]);
            assert!((fa - bb).abs() < 1e-12, "{t}: {fa} vs {bb}");
        }
    }

    #[test]
    fn embedding_dimension_and_totality() {
        let m = tiny_model(false, 0);
        let e = m.extract_embeddings(&Sentence::new(words("cat")).unwrap()).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].len(), 6 + 10);
        assert!(e[0].iter().all(|v| v.is_finite()));
        assert_eq!(LmConfig::toy().embedding_dim(), 176);
    }

    #[test]
    fn nll_rejects_out_of_range_target() {
        let mut g = Graph::<f64>::new();
        let lp = g.constant(Tensor::from_f64(vec![1, 2], &[0.5f64.ln(), 0.5f64.ln()]).unwrap());
        assert!(nll_loss(&mut g, lp, &[2]).is_err());
        let (_, loss) = nll_loss(&mut g, lp, &[1]).unwrap();
        assert!((g.value(loss).item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_direction_average_by_hand() {
        // Forward per-row NLL 1, 2, 3 and backward 4, 5, 6 → mean 3.5.
        let nll = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let data: Vec<f64> = nll.iter().flat_map(|&x| [-x, -x]).collect();
        let mut g = Graph::<f64>::new();
        let lp = g.constant(Tensor::from_f64(vec![6, 2], &data).unwrap());
        let (sum, loss) = nll_loss(&mut g, lp, &[0; 6]).unwrap();
        assert!((g.value(sum).item() - 21.0).abs() < 1e-15);
        assert!((g.value(loss).item() - 3.5).abs() < 1e-15);
    }
}
