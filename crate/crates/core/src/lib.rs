//! Subword vocabulary training and subword-aware bidirectional language
//! models.
//!
//! The crate is organized bottom-up:
//!
//! * [`corpus`]: word-type counting and sentence streaming.
//! * [`segmentation`]: BPE and unigram-LM vocabulary training and decoding.
//! * [`numerics`]: dense tensors with reverse-mode differentiation.
//! * [`composer`]: subword embeddings, convolution + max-pooling, highway.
//! * [`lm`]: bidirectional LSTM language model, training, perplexity and
//!   contextual embeddings.
//! * [`analysis`]: vocabulary overlap and segmentation consistency.
//! * [`cli`]: the `subtok` command-line tool.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the two concrete instantiations.

pub mod analysis;
pub mod cli;
pub mod composer;
pub mod corpus;
pub mod error;
pub mod lm;
pub mod numerics;
pub mod scalar;
pub mod segmentation;

pub use error::{Error, Result};
pub use scalar::{DType, Scalar};

pub type Tensor32 = numerics::Tensor<f32>;
pub type Tensor64 = numerics::Tensor<f64>;
pub type Graph32 = numerics::Graph<f32>;
pub type Graph64 = numerics::Graph<f64>;
pub type ParamSet32 = numerics::ParamSet<f32>;
pub type ParamSet64 = numerics::ParamSet<f64>;
pub type LmModel32 = lm::LmModel<f32>;
pub type LmModel64 = lm::LmModel<f64>;
