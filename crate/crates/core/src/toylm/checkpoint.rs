//! Toy checkpoint container.
//!
//! Layout on disk:
//!
//! ```text
//! [u8 format version][u64 LE header length][JSON header][f64 LE tensors...]
//! ```
//!
//! The header carries the model config, step, tokens seen, corpus config,
//! tokenizer table, corpus RNG position and the declared tensor order. The
//! payload holds the parameters followed by the two Adam moment vectors, each
//! in the declared tensor order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{SynthCorpusConfig, ToyConfig};
use super::params::ToyParams;
use super::vocab::ToyVocab;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u8 = 1;
const BLOCKS: [&str; 3] = ["params", "adam_m", "adam_v"];

/// Position of the corpus generator, enough to continue the exact stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        if let Ok(bytes) = hex::decode(&self.seed) {
            if bytes.len() == 32 {
                seed.copy_from_slice(&bytes);
            }
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().unwrap_or(0));
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCheckpoint {
    pub params: ToyParams,
    pub step: u64,
    pub tokens_seen: u64,
    pub batch_tokens: u64,
    pub corpus: SynthCorpusConfig,
    pub vocab: ToyVocab,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub rng: RngState,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ToyConfig,
    step: u64,
    tokens_seen: u64,
    batch_tokens: u64,
    corpus: SynthCorpusConfig,
    vocab: ToyVocab,
    rng: RngState,
    blocks: Vec<String>,
    tensors: Vec<TensorEntry>,
}

impl ToyCheckpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.params.data().len();
        if self.adam_m.len() != n || self.adam_v.len() != n {
            return Err(Error::Checkpoint("moment vectors do not match parameter count".into()));
        }
        let header = Header {
            config: self.params.config().clone(),
            step: self.step,
            tokens_seen: self.tokens_seen,
            batch_tokens: self.batch_tokens,
            corpus: self.corpus.clone(),
            vocab: self.vocab.clone(),
            rng: self.rng.clone(),
            blocks: BLOCKS.iter().map(|s| s.to_string()).collect(),
            tensors: self
                .params
                .layout()
                .tensors()
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(9 + json.len() + 24 * n);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for block in [self.params.data(), &self.adam_m, &self.adam_v] {
            for x in block {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (&version, rest) = bytes
            .split_first()
            .ok_or_else(|| Error::Checkpoint("empty file".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        if rest.len() < 8 {
            return Err(Error::Checkpoint("truncated header length".into()));
        }
        let hlen = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
        let rest = &rest[8..];
        if rest.len() < hlen {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&rest[..hlen])?;
        let payload = &rest[hlen..];

        let zero = ToyParams::zeros(&header.config)?;
        let layout = zero.layout();
        let declared: Vec<(&str, &[usize])> = header
            .tensors
            .iter()
            .map(|t| (t.name.as_str(), t.shape.as_slice()))
            .collect();
        let expected: Vec<(&str, &[usize])> = layout
            .tensors()
            .iter()
            .map(|t| (t.name.as_str(), t.shape.as_slice()))
            .collect();
        if declared != expected || header.blocks != BLOCKS {
            return Err(Error::Checkpoint("tensor declaration does not match config".into()));
        }
        let n = layout.total();
        if payload.len() != 3 * n * 8 {
            return Err(Error::Checkpoint(format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                3 * n * 8
            )));
        }
        let mut floats = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let params: Vec<f64> = floats.by_ref().take(n).collect();
        let adam_m: Vec<f64> = floats.by_ref().take(n).collect();
        let adam_v: Vec<f64> = floats.collect();
        Ok(Self {
            params: ToyParams::from_data(&header.config, params)?,
            step: header.step,
            tokens_seen: header.tokens_seen,
            batch_tokens: header.batch_tokens,
            corpus: header.corpus,
            vocab: header.vocab,
            adam_m,
            adam_v,
            rng: header.rng,
        })
    }

    /// Writes atomically (temp file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        crate::fsio::write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn file_name(step: u64) -> String {
        format!("step{step}.ckpt")
    }
}

/// All `step<N>.ckpt` files in a directory, sorted by step.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(step) = name
            .strip_prefix("step")
            .and_then(|s| s.strip_suffix(".ckpt"))
            .and_then(|s| s.parse().ok())
        {
            out.push((step, path));
        }
    }
    out.sort();
    Ok(out)
}
