use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the toy decoder-only transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub context_len: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            vocab_size: 2048,
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            d_ff: 256,
            context_len: 128,
            init_std: 0.02,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Toy(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < 64 {
            return Err(Error::Toy(format!(
                "vocab_size {} is below the minimum of 64",
                self.vocab_size
            )));
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.context_len == 0 {
            return Err(Error::Toy("n_layers, d_ff and context_len must be positive".into()));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::Toy(format!("bad init_std {}", self.init_std)));
        }
        Ok(())
    }
}

/// Synthetic repetition corpus settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthCorpusConfig {
    pub zipf_exponent: f64,
    /// Probability that a sequence re-emits one of its earlier spans verbatim.
    pub p_repeat: f64,
    pub span_min: usize,
    pub span_max: usize,
    pub seq_len: usize,
    /// Filler tokens are drawn from ids `0..filler_vocab`, id 0 being the most frequent.
    pub filler_vocab: usize,
    pub seed: u64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self {
            zipf_exponent: 1.1,
            p_repeat: 0.5,
            span_min: 3,
            span_max: 10,
            seq_len: 128,
            filler_vocab: 2048,
            seed: 0,
        }
    }
}

impl SynthCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_repeat) {
            return Err(Error::Toy(format!("p_repeat {} outside [0,1]", self.p_repeat)));
        }
        if self.span_min == 0 || self.span_min > self.span_max {
            return Err(Error::Toy(format!(
                "bad span range [{}, {}]",
                self.span_min, self.span_max
            )));
        }
        if 2 * self.span_max >= self.seq_len {
            return Err(Error::Toy(format!(
                "span_max {} must be below seq_len/2 ({})",
                self.span_max, self.seq_len
            )));
        }
        if self.filler_vocab == 0 {
            return Err(Error::Toy("filler_vocab must be positive".into()));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0) {
            return Err(Error::Toy(format!("bad zipf exponent {}", self.zipf_exponent)));
        }
        Ok(())
    }
}

/// Optimizer and schedule settings for [`crate::toylm::train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_tokens: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: u64,
    pub checkpoint_steps: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 16384,
            batch_tokens: 256,
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 100,
            checkpoint_steps: vec![0, 1, 4, 16, 64, 256, 1024, 4096, 16384],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, seq_len: usize) -> Result<()> {
        if self.batch_tokens == 0 || self.batch_tokens % seq_len != 0 {
            return Err(Error::Toy(format!(
                "batch_tokens {} must be a positive multiple of seq_len {seq_len}",
                self.batch_tokens
            )));
        }
        let cs = &self.checkpoint_steps;
        if cs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Toy("checkpoint_steps must be strictly increasing".into()));
        }
        if cs.first() != Some(&0) || cs.last() != Some(&self.steps) {
            return Err(Error::Toy(format!(
                "checkpoint_steps must start at 0 and end at steps ({})",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Everything `toy-train` needs, as read from a JSON config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyRunConfig {
    pub model: ToyConfig,
    pub corpus: SynthCorpusConfig,
    pub train: TrainConfig,
}

impl ToyRunConfig {
    /// Uses `seed` for both initialization and the corpus stream.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.corpus.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.corpus.validate()?;
        self.train.validate(self.corpus.seq_len)?;
        if self.corpus.seq_len > self.model.context_len {
            return Err(Error::Toy(format!(
                "corpus seq_len {} exceeds context_len {}",
                self.corpus.seq_len, self.model.context_len
            )));
        }
        if self.corpus.filler_vocab > self.model.vocab_size {
            return Err(Error::Toy(format!(
                "filler_vocab {} exceeds vocab_size {}",
                self.corpus.filler_vocab, self.model.vocab_size
            )));
        }
        Ok(())
    }
}
