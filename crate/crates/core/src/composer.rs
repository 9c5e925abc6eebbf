//! Word vectors composed from subword pieces.
//!
//! Each piece is looked up in an embedding table, every convolution kernel
//! slides over the piece sequence (narrow convolution, tanh), the result is
//! max-pooled over positions, the per-kernel vectors are concatenated, and a
//! stack of highway layers refines the concatenation.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamSet, Var};
use crate::scalar::Scalar;
use crate::segmentation::{Segmentation, SubwordVocab};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub width: usize,
    pub channels: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposerConfig {
    pub d_sub: usize,
    pub kernels: Vec<KernelSpec>,
    pub highway_layers: usize,
    /// Longer segmentations are truncated to this many pieces.
    pub max_pieces: usize,
}

impl ComposerConfig {
    /// Desk-scale preset: d_sub 16, widths 1–4 with 8/8/16/16 channels,
    /// one highway layer.
    pub fn toy() -> Self {
        Self {
            d_sub: 16,
            kernels: [(1, 8), (2, 8), (3, 16), (4, 16)]
                .into_iter()
                .map(|(width, channels)| KernelSpec { width, channels })
                .collect(),
            highway_layers: 1,
            max_pieces: 24,
        }
    }

    /// The character-CNN input configuration of the full-scale ELMo model.
    pub fn elmo() -> Self {
        Self {
            d_sub: 16,
            kernels: [(1, 32), (2, 32), (3, 64), (4, 128), (5, 256), (6, 512), (7, 1024)]
                .into_iter()
                .map(|(width, channels)| KernelSpec { width, channels })
                .collect(),
            highway_layers: 2,
            max_pieces: 24,
        }
    }

    /// Dimension of the composed word vector: total output channels.
    pub fn d_cnn(&self) -> usize {
        self.kernels.iter().map(|k| k.channels).sum()
    }

    pub fn max_width(&self) -> usize {
        self.kernels.iter().map(|k| k.width).max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_sub == 0 {
            return Err(Error::param("d_sub", "must be positive"));
        }
        if self.kernels.is_empty() {
            return Err(Error::param("kernel_widths", "at least one kernel is required"));
        }
        if self.kernels.iter().any(|k| k.width == 0 || k.channels == 0) {
            return Err(Error::param("kernel_widths", "widths and channels must be positive"));
        }
        if self.max_pieces == 0 {
            return Err(Error::param("max_pieces", "must be positive"));
        }
        Ok(())
    }
}

/// Embedding rows for `vocab_size` subwords plus two reserved rows:
/// padding at `vocab_size` and the unknown-character piece after it.
#[derive(Clone, Debug)]
pub struct SubwordEmbeddingTable {
    pub weights: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl SubwordEmbeddingTable {
    pub fn pad_id(&self) -> usize {
        self.vocab_size
    }

    pub fn unk_id(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn rows(&self) -> usize {
        self.vocab_size + 2
    }
}

/// Convolution kernel. Weights have shape `(width·d_sub) × channels`, the
/// row-major flattening of `width × d_sub × channels`.
#[derive(Clone, Debug)]
pub struct ConvKernel {
    pub width: usize,
    pub out_channels: usize,
    pub weights: ParamId,
    pub bias: ParamId,
}

/// `y = t ⊙ tanh(x W_H + b_H) + (1 − t) ⊙ x` with `t = σ(x W_T + b_T)`.
#[derive(Clone, Debug)]
pub struct HighwayLayer {
    pub transform_w: ParamId,
    pub transform_b: ParamId,
    pub gate_w: ParamId,
    pub gate_b: ParamId,
}

#[derive(Clone, Debug)]
pub struct Composer {
    config: ComposerConfig,
    pub table: SubwordEmbeddingTable,
    pub kernels: Vec<ConvKernel>,
    pub highway: Vec<HighwayLayer>,
}

/// Composer parameters entered into one graph.
#[derive(Clone, Debug)]
pub struct BoundComposer {
    table: Var,
    kernels: Vec<(usize, Var, Var)>,
    highway: Vec<[Var; 4]>,
    pad_id: usize,
    max_width: usize,
}

/// Initial highway gate bias; a negative value starts layers close to the
/// carry (identity) path.
const GATE_BIAS_INIT: f64 = -1.0;

impl Composer {
    /// Registers freshly initialized parameters under `prefix`.
    pub fn new<T: Scalar, R: Rng>(
        config: ComposerConfig,
        vocab_size: usize,
        params: &mut ParamSet<T>,
        rng: &mut R,
        prefix: &str,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d_sub;
        let table = SubwordEmbeddingTable {
            weights: params.add_uniform(format!("{prefix}.embedding"), &[vocab_size + 2, d], 1.0, rng)?,
            vocab_size,
            dim: d,
        };
        let mut kernels = Vec::with_capacity(config.kernels.len());
        for (i, k) in config.kernels.iter().enumerate() {
            let fan_in = (k.width * d) as f64;
            kernels.push(ConvKernel {
                width: k.width,
                out_channels: k.channels,
                weights: params.add_uniform(
                    format!("{prefix}.conv{i}.weight"),
                    &[k.width * d, k.channels],
                    1.0 / fan_in.sqrt(),
                    rng,
                )?,
                bias: params.add(format!("{prefix}.conv{i}.bias"), crate::numerics::Tensor::zeros(&[k.channels]))?,
            });
        }
        let d_cnn = config.d_cnn();
        let scale = 1.0 / (d_cnn as f64).sqrt();
        let mut highway = Vec::with_capacity(config.highway_layers);
        for l in 0..config.highway_layers {
            highway.push(HighwayLayer {
                transform_w: params.add_uniform(format!("{prefix}.highway{l}.transform_w"), &[d_cnn, d_cnn], scale, rng)?,
                transform_b: params.add(
                    format!("{prefix}.highway{l}.transform_b"),
                    crate::numerics::Tensor::zeros(&[d_cnn]),
                )?,
                gate_w: params.add_uniform(format!("{prefix}.highway{l}.gate_w"), &[d_cnn, d_cnn], scale, rng)?,
                gate_b: params.add(
                    format!("{prefix}.highway{l}.gate_b"),
                    crate::numerics::Tensor::full(&[d_cnn], T::lit(GATE_BIAS_INIT)),
                )?,
            });
        }
        Ok(Self {
            config,
            table,
            kernels,
            highway,
        })
    }

    /// Looks up parameters previously registered under `prefix`.
    pub fn from_params<T: Scalar>(
        config: ComposerConfig,
        vocab_size: usize,
        params: &ParamSet<T>,
        prefix: &str,
    ) -> Result<Self> {
        config.validate()?;
        let find = |name: String, shape: &[usize]| -> Result<ParamId> {
            let id = params
                .by_name(&name)
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
        let d = config.d_sub;
        let d_cnn = config.d_cnn();
        let table = SubwordEmbeddingTable {
            weights: find(format!("{prefix}.embedding"), &[vocab_size + 2, d])?,
            vocab_size,
            dim: d,
        };
        let mut kernels = Vec::new();
        for (i, k) in config.kernels.iter().enumerate() {
            kernels.push(ConvKernel {
                width: k.width,
                out_channels: k.channels,
                weights: find(format!("{prefix}.conv{i}.weight"), &[k.width * d, k.channels])?,
                bias: find(format!("{prefix}.conv{i}.bias"), &[k.channels])?,
            });
        }
        let mut highway = Vec::new();
        for l in 0..config.highway_layers {
            highway.push(HighwayLayer {
                transform_w: find(format!("{prefix}.highway{l}.transform_w"), &[d_cnn, d_cnn])?,
                transform_b: find(format!("{prefix}.highway{l}.transform_b"), &[d_cnn])?,
                gate_w: find(format!("{prefix}.highway{l}.gate_w"), &[d_cnn, d_cnn])?,
                gate_b: find(format!("{prefix}.highway{l}.gate_b"), &[d_cnn])?,
            });
        }
        Ok(Self {
            config,
            table,
            kernels,
            highway,
        })
    }

    pub fn config(&self) -> &ComposerConfig {
        &self.config
    }

    pub fn d_cnn(&self) -> usize {
        self.config.d_cnn()
    }

    /// Maps a segmentation to embedding rows. Unknown pieces map to the
    /// reserved unknown row; pieces beyond `max_pieces` are dropped.
    pub fn piece_ids(&self, seg: &Segmentation, vocab: &SubwordVocab) -> Vec<usize> {
        let mut ids: Vec<usize> = seg
            .pieces()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if seg.is_unknown(i) {
                    self.table.unk_id()
                } else {
                    vocab.id(p).unwrap_or(self.table.unk_id())
                }
            })
            .collect();
        if ids.len() > self.config.max_pieces {
            warn!(
                "truncating {:?} from {} to {} pieces",
                seg.word(),
                ids.len(),
                self.config.max_pieces
            );
            ids.truncate(self.config.max_pieces);
        }
        ids
    }

    pub fn bind<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamSet<T>) -> BoundComposer {
        BoundComposer {
            table: g.param(params, self.table.weights),
            kernels: self
                .kernels
                .iter()
                .map(|k| (k.width, g.param(params, k.weights), g.param(params, k.bias)))
                .collect(),
            highway: self
                .highway
                .iter()
                .map(|h| {
                    [
                        g.param(params, h.transform_w),
                        g.param(params, h.transform_b),
                        g.param(params, h.gate_w),
                        g.param(params, h.gate_b),
                    ]
                })
                .collect(),
            pad_id: self.table.pad_id(),
            max_width: self.config.max_width(),
        }
    }
}

/// Narrow convolution of an `m × d_sub` sequence with one kernel, tanh, then
/// max over the `m − w + 1` positions. Requires `m ≥ w`.
pub fn conv_maxpool<T: Scalar>(
    g: &mut Graph<T>,
    embedded: Var,
    width: usize,
    weights: Var,
    bias: Var,
) -> Result<Var> {
    let windows = g.unfold(embedded, width)?;
    let pre = g.matmul(windows, weights)?;
    let pre = g.add_bias(pre, bias)?;
    let act = g.tanh(pre);
    g.max_axis(act, 0)
}

/// One highway layer on a `rows × d` input.
pub fn highway<T: Scalar>(g: &mut Graph<T>, x: Var, layer: &[Var; 4]) -> Result<Var> {
    let [tw, tb, gw, gb] = *layer;
    let h = g.matmul(x, tw)?;
    let h = g.add_bias(h, tb)?;
    let h = g.tanh(h);
    let t = g.matmul(x, gw)?;
    let t = g.add_bias(t, gb)?;
    let t = g.sigmoid(t);
    // x + t ⊙ (h − x) = t ⊙ h + (1 − t) ⊙ x
    let diff = g.sub(h, x)?;
    let gated = g.mul(t, diff)?;
    g.add(x, gated)
}

impl BoundComposer {
    /// Composes one word from its embedding-row ids into a `1 × d_cnn`
    /// vector.
    ///
    /// Trailing padding ids are masked out: convolution positions that touch
    /// them never reach the max-pool. A word shorter than a kernel is
    /// left-padded with the padding row to exactly the kernel width.
    pub fn compose_word<T: Scalar>(&self, g: &mut Graph<T>, ids: &[usize]) -> Result<Var> {
        let real_len = ids
            .iter()
            .rposition(|&i| i != self.pad_id)
            .map_or(0, |p| p + 1);
        if real_len == 0 {
            return Err(Error::param("pieces", "cannot compose a word with no pieces"));
        }
        let real = &ids[..real_len];
        let pad = self.max_width.saturating_sub(real_len);
        let mut padded = vec![self.pad_id; pad];
        padded.extend_from_slice(real);
        let embedded = g.gather_rows(self.table, &padded)?;

        let mut pooled = Vec::with_capacity(self.kernels.len());
        for &(width, w, b) in &self.kernels {
            let rows = if real_len >= width {
                g.slice(embedded, 0, pad, pad + real_len)?
            } else {
                g.slice(embedded, 0, pad + real_len - width, pad + real_len)?
            };
            pooled.push(conv_maxpool(g, rows, width, w, b)?);
        }
        let mut y = g.concat(&pooled, 1)?;
        for layer in &self.highway {
            y = highway(g, y, layer)?;
        }
        Ok(y)
    }
}
