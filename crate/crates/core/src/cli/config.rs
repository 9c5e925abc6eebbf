//! Flat `key = value` configuration for `train-lm`.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; missing keys keep the toy preset value.

use crate::composer::KernelSpec;
use crate::error::{Error, Result};
use crate::lm::{LmConfig, OptimizerKind, TrainConfig};
use crate::scalar::DType;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: LmConfig,
    /// Training settings; the seed is filled in from the command line.
    pub train: TrainConfig,
    /// Precision used during training.
    pub dtype: DType,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: LmConfig::toy(),
            train: TrainConfig::toy(0),
            dtype: DType::F32,
        }
    }
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::format("config", line, message)
}

fn num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(line, format!("`{key}`: cannot parse {value:?}")))
}

fn list(key: &str, value: &str, line: usize) -> Result<Vec<usize>> {
    value.split(',').map(|v| num(key, v.trim(), line)).collect()
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut widths: Option<(Vec<usize>, usize)> = None;
    let mut channels: Option<(Vec<usize>, usize)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| bad(line, "expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        let m = &mut cfg.model;
        let t = &mut cfg.train;
        match key {
            "batch_size" => t.batch_size = num(key, value, line)?,
            "max_len" => t.max_len = num(key, value, line)?,
            "learning_rate" => t.learning_rate = num(key, value, line)?,
            "optimizer" => {
                t.optimizer = OptimizerKind::from_name(value)
                    .ok_or_else(|| bad(line, format!("`optimizer`: expected sgd or adam, got {value:?}")))?
            }
            "clip_norm" => t.clip_norm = num(key, value, line)?,
            "epochs" => t.epochs = num(key, value, line)?,
            "d_sub" => m.composer.d_sub = num(key, value, line)?,
            "kernel_widths" => widths = Some((list(key, value, line)?, line)),
            "kernel_channels" => channels = Some((list(key, value, line)?, line)),
            "highway_layers" => m.composer.highway_layers = num(key, value, line)?,
            "max_pieces" => m.composer.max_pieces = num(key, value, line)?,
            "hidden" => m.hidden = num(key, value, line)?,
            "layers" => m.layers = num(key, value, line)?,
            "max_output_words" => m.max_output_words = num(key, value, line)?,
            "zero_output_init" => m.zero_output_init = num(key, value, line)?,
            "dtype" => {
                cfg.dtype = match value {
                    "f32" => DType::F32,
                    "f64" => DType::F64,
                    _ => return Err(bad(line, format!("`dtype`: expected f32 or f64, got {value:?}"))),
                }
            }
            _ => return Err(bad(line, format!("unknown key `{key}`"))),
        }
    }
    match (widths, channels) {
        (None, None) => {}
        (Some((w, line)), Some((c, _))) => {
            if w.len() != c.len() {
                return Err(bad(
                    line,
                    format!("{} kernel widths but {} channel counts", w.len(), c.len()),
                ));
            }
            cfg.model.composer.kernels = w
                .into_iter()
                .zip(c)
                .map(|(width, channels)| KernelSpec { width, channels })
                .collect();
        }
        (Some((_, line)), None) | (None, Some((_, line))) => {
            return Err(bad(line, "kernel_widths and kernel_channels must be given together"));
        }
    }
    cfg.model.validate()?;
    cfg.train.validate()?;
    Ok(cfg)
}
