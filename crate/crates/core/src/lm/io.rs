use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::numerics::{load_checkpoint, save_checkpoint};
use crate::scalar::Scalar;
use crate::segmentation::{MergeTable, SubwordVocab};

use super::{LmConfig, LmModel, OutputVocab};

const MANIFEST_FORMAT: &str = "subtok-lm";
const MANIFEST_VERSION: u32 = 1;

/// First line of an embedding dump; `{dim}` is `d_cnn + 2h`.
pub const EMBEDDINGS_HEADER: &str = "#subtok-embeddings v1";

/// JSON stored alongside the tensors of a model checkpoint. The subword
/// vocabulary and merge table are embedded verbatim so a checkpoint is
/// self-contained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub version: u32,
    pub algo: String,
    pub vocab_sha256: String,
    pub d_cnn: usize,
    pub hidden: usize,
    pub layers: usize,
    pub v_out: usize,
    pub embedding_dim: usize,
    pub config: LmConfig,
    pub vocab: String,
    pub merges: Option<String>,
    pub output_words: Vec<String>,
}

pub fn model_manifest<T: Scalar>(model: &LmModel<T>) -> ModelManifest {
    let c = model.config();
    ModelManifest {
        format: MANIFEST_FORMAT.to_string(),
        version: MANIFEST_VERSION,
        algo: model.vocab().algo().name().to_string(),
        vocab_sha256: model.vocab().sha256(),
        d_cnn: c.d_cnn(),
        hidden: c.hidden,
        layers: c.layers,
        v_out: model.output_vocab().len(),
        embedding_dim: c.embedding_dim(),
        config: c.clone(),
        vocab: model.vocab().to_file_string(),
        merges: model.merges().map(MergeTable::to_file_string),
        output_words: model.output_vocab().words().to_vec(),
    }
}

pub fn save_model<T: Scalar>(path: impl AsRef<Path>, model: &LmModel<T>) -> Result<()> {
    let manifest = serde_json::to_string_pretty(&model_manifest(model))
        .map_err(|e| Error::Invariant(format!("manifest serialization: {e}")))?;
    save_checkpoint(path, &manifest, &model.params)
}

/// Loads a checkpoint into a model of element type `T`, whatever precision
/// it was saved in.
pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<LmModel<T>> {
    let path = path.as_ref();
    let ck = load_checkpoint(path)?;
    let bad = |message: String| Error::format("model checkpoint", 0, message);
    let m: ModelManifest =
        serde_json::from_str(&ck.manifest).map_err(|e| bad(format!("invalid manifest: {e}")))?;
    if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
        return Err(bad(format!("unsupported model format {} v{}", m.format, m.version)));
    }
    let vocab = SubwordVocab::parse(&m.vocab)?;
    if vocab.sha256() != m.vocab_sha256 {
        return Err(bad("embedded vocabulary does not match its hash".to_string()));
    }
    let merges = m.merges.as_deref().map(MergeTable::parse).transpose()?;
    let output = OutputVocab::from_words(m.output_words)?;
    LmModel::from_parts(m.config, vocab, merges, output, ck.to_params()?)
}

/// One line per word: the form, a tab, then space-separated values with six
/// decimals.
pub fn format_embeddings(sentence: &Sentence, vectors: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for (w, v) in sentence.words().iter().zip(vectors) {
        out.push_str(w);
        out.push('\t');
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{x:.6}");
        }
        out.push('\n');
    }
    out
}
