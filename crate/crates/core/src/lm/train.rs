use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceStream;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamSet, Tensor};
use crate::scalar::Scalar;

use super::{LmModel, OutputVocab, PieceCache, BOS_ID, EOS_ID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(Self::Sgd),
            "adam" => Some(Self::Adam),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Sentences longer than this are cut into consecutive chunks, each
    /// framed by its own sentinels.
    pub max_len: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub clip_norm: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn toy(seed: u64) -> Self {
        Self {
            batch_size: 32,
            max_len: 50,
            learning_rate: 0.005,
            optimizer: OptimizerKind::Adam,
            clip_norm: 5.0,
            epochs: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if self.max_len == 0 {
            return Err(Error::param("max_len", "must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be a finite non-negative number"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::param("clip_norm", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Running average over the epoch's training batches.
    pub train_ppl: f64,
    pub valid_ppl: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    /// `epoch<TAB>train_ppl<TAB>valid_ppl` lines under a header; a missing
    /// validation set is written as `-`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_ppl\tvalid_ppl\n");
        for e in &self.epochs {
            let valid = e.valid_ppl.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(out, "{}\t{:.6}\t{}", e.epoch, e.train_ppl, valid);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerplexityReport {
    pub forward: f64,
    pub backward: f64,
    pub combined: f64,
    /// Predictions per direction (words plus one sentinel per sentence).
    pub predictions: usize,
}

/// Groups sentences (or `max_len` chunks of them) into batches of equal
/// length. With an RNG, chunk order and batch order are shuffled;
/// otherwise batches follow length, then corpus order.
pub fn batches<'a, R: Rng>(
    corpus: &'a SentenceStream,
    batch_size: usize,
    max_len: usize,
    rng: Option<&mut R>,
) -> Vec<Vec<&'a [String]>> {
    let mut chunks: Vec<&[String]> = corpus
        .sentences()
        .iter()
        .flat_map(|s| s.words().chunks(max_len))
        .collect();
    let mut rng = rng;
    if let Some(r) = rng.as_deref_mut() {
        chunks.shuffle(r);
    }
    let mut by_len: BTreeMap<usize, Vec<&[String]>> = BTreeMap::new();
    for c in chunks {
        by_len.entry(c.len()).or_default().push(c);
    }
    let mut out: Vec<Vec<&[String]>> = by_len
        .into_values()
        .flat_map(|group| {
            group
                .chunks(batch_size)
                .map(<[&[String]]>::to_vec)
                .collect::<Vec<_>>()
        })
        .collect();
    if let Some(r) = rng {
        out.shuffle(r);
    }
    out
}

enum Optimizer<T> {
    Sgd,
    Adam {
        m: Vec<Tensor<T>>,
        v: Vec<Tensor<T>>,
        t: i32,
    },
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl<T: Scalar> Optimizer<T> {
    fn new(kind: OptimizerKind, params: &ParamSet<T>) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::Sgd,
            OptimizerKind::Adam => Self::Adam {
                m: params.iter().map(|p| p.value.zeros_like()).collect(),
                v: params.iter().map(|p| p.value.zeros_like()).collect(),
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut ParamSet<T>, lr: f64) {
        match self {
            Self::Sgd => {
                let lr = T::lit(lr);
                for p in params.iter_mut() {
                    for (w, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *w -= lr * g;
                    }
                }
            }
            Self::Adam { m, v, t } => {
                *t += 1;
                let step = lr * (1.0 - ADAM_BETA2.powi(*t)).sqrt() / (1.0 - ADAM_BETA1.powi(*t));
                let (b1, b2, eps, step) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPS), T::lit(step));
                let one = T::one();
                for ((p, m), v) in params.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                    let grads = p.grad.data();
                    for (((w, &g), mk), vk) in p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(grads)
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mk = b1 * *mk + (one - b1) * g;
                        *vk = b2 * *vk + (one - b2) * g * g;
                        *w -= step * *mk / (vk.sqrt() + eps);
                    }
                }
            }
        }
    }
}

fn non_finite<T: Scalar>(what: &str, epoch: usize, batch: usize, params: &ParamSet<T>) -> Error {
    Error::Numerical(format!(
        "non-finite {what} at epoch {epoch}, batch {batch}; parameter norms: {}",
        params.norms_summary()
    ))
}

/// Trains in place. The batch order is drawn from `cfg.seed`, so identical
/// inputs give identical trajectories.
pub fn train<T: Scalar>(
    model: &mut LmModel<T>,
    corpus: &SentenceStream,
    valid: Option<&SentenceStream>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::param("corpus", "training corpus has no sentences"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, &model.params);
    let mut cache = PieceCache::new();
    let mut report = TrainReport::default();
    for epoch in 1..=cfg.epochs {
        let plan = batches(corpus, cfg.batch_size, cfg.max_len, Some(&mut rng));
        let mut nll = 0.0;
        let mut count = 0usize;
        for (bi, batch) in plan.iter().enumerate() {
            model.params.zero_grad();
            let mut g = Graph::new();
            let out = model.forward_batch(&mut g, batch, &mut cache)?;
            let batch_nll = g.value(out.nll_sum).item().as_f64();
            if !batch_nll.is_finite() {
                return Err(non_finite("loss", epoch, bi, &model.params));
            }
            g.backward(out.loss, &mut model.params)?;
            let norm = model.params.clip_grad_norm(cfg.clip_norm);
            if !norm.is_finite() {
                return Err(non_finite("gradient", epoch, bi, &model.params));
            }
            opt.step(&mut model.params, cfg.learning_rate);
            nll += batch_nll;
            count += out.num_predictions();
        }
        let train_ppl = (nll / count as f64).exp();
        let valid_ppl = match valid {
            Some(v) if !v.is_empty() => Some(perplexity(model, v, cfg.batch_size)?.combined),
            _ => None,
        };
        info!("epoch {epoch}: train ppl {train_ppl:.4}, valid ppl {valid_ppl:?}");
        report.epochs.push(EpochStats {
            epoch,
            train_ppl,
            valid_ppl,
        });
    }
    Ok(report)
}

/// Perplexity of whole sentences, per direction and over both directions
/// together.
pub fn perplexity<T: Scalar>(model: &LmModel<T>, corpus: &SentenceStream, batch_size: usize) -> Result<PerplexityReport> {
    if corpus.is_empty() {
        return Err(Error::param("corpus", "cannot evaluate perplexity on an empty corpus"));
    }
    let max_len = corpus.sentences().iter().map(|s| s.len()).max().unwrap_or(1);
    let mut cache = PieceCache::new();
    let (mut fwd, mut bwd, mut n) = (0.0f64, 0.0f64, 0usize);
    for batch in batches::<ChaCha8Rng>(corpus, batch_size.max(1), max_len, None) {
        let mut g = Graph::new();
        let out = model.forward_batch(&mut g, &batch, &mut cache)?;
        let lp = g.value(out.log_probs);
        for (r, &t) in out.targets.iter().enumerate() {
            let v = -lp.at(r, t).as_f64();
            if r < out.rows_per_direction {
                fwd += v;
            } else {
                bwd += v;
            }
        }
        n += out.rows_per_direction;
    }
    let report = PerplexityReport {
        forward: (fwd / n as f64).exp(),
        backward: (bwd / n as f64).exp(),
        combined: ((fwd + bwd) / (2 * n) as f64).exp(),
        predictions: n,
    };
    if !report.combined.is_finite() {
        return Err(Error::Numerical(format!("non-finite perplexity {report:?}")));
    }
    Ok(report)
}

/// Perplexity of the maximum-likelihood unigram distribution over the same
/// prediction targets the model is scored on (both directions, words mapped
/// through `output`, one `<eos>` and one `<bos>` per sentence).
pub fn unigram_baseline_ppl(output: &OutputVocab, corpus: &SentenceStream) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::param("corpus", "cannot compute a baseline on an empty corpus"));
    }
    let mut counts = vec![0u64; output.len()];
    for s in corpus.sentences() {
        for w in s.words() {
            counts[output.id(w)] += 2;
        }
        counts[EOS_ID] += 1;
        counts[BOS_ID] += 1;
    }
    let total: u64 = counts.iter().sum();
    let total_f = total as f64;
    let entropy: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total_f;
            -(c as f64) * p.ln()
        })
        .sum::<f64>()
        / total_f;
    Ok(entropy.exp())
}
