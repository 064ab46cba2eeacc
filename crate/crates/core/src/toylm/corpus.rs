//! Synthetic training corpus with injected verbatim repetitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::config::SynthCorpusConfig;
use crate::error::{Error, Result};

/// Location of a verbatim re-emission inside a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepeatSpan {
    pub src: usize,
    pub dst: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSequence {
    pub tokens: Vec<u32>,
    pub repeat: Option<RepeatSpan>,
}

/// Endless, seeded stream of synthetic sequences.
///
/// Filler tokens are Zipf-distributed over `0..filler_vocab` (id 0 is rank 1).
/// With probability `p_repeat` a span of length uniform in
/// `[span_min, span_max]` is copied from an earlier position to a later,
/// non-overlapping one.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    cfg: SynthCorpusConfig,
    zipf: Zipf<f64>,
    rng: ChaCha8Rng,
}

impl SynthCorpus {
    pub fn new(cfg: &SynthCorpusConfig) -> Result<Self> {
        Self::with_stream(cfg, 0)
    }

    /// Independent stream for the same config, e.g. a held-out split.
    pub fn with_stream(cfg: &SynthCorpusConfig, stream: u64) -> Result<Self> {
        cfg.validate()?;
        let zipf = Zipf::new(cfg.filler_vocab as f64, cfg.zipf_exponent)
            .map_err(|e| Error::Toy(format!("zipf: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        Ok(Self {
            cfg: cfg.clone(),
            zipf,
            rng,
        })
    }

    pub fn config(&self) -> &SynthCorpusConfig {
        &self.cfg
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    pub fn next_sequence(&mut self) -> SynthSequence {
        let n = self.cfg.seq_len;
        let mut tokens: Vec<u32> = (0..n)
            .map(|_| self.zipf.sample(&mut self.rng) as u32 - 1)
            .collect();
        let mut repeat = None;
        if self.rng.random_bool(self.cfg.p_repeat) {
            let len = self.rng.random_range(self.cfg.span_min..=self.cfg.span_max);
            let src = self.rng.random_range(0..=n - 2 * len);
            let dst = self.rng.random_range(src + len..=n - len);
            tokens.copy_within(src..src + len, dst);
            repeat = Some(RepeatSpan { src, dst, len });
        }
        SynthSequence { tokens, repeat }
    }

    pub fn batch(&mut self, n_seqs: usize) -> Vec<Vec<u32>> {
        (0..n_seqs).map(|_| self.next_sequence().tokens).collect()
    }
}

impl Iterator for SynthCorpus {
    type Item = SynthSequence;

    fn next(&mut self) -> Option<SynthSequence> {
        Some(self.next_sequence())
    }
}

/// Convenience constructor mirroring the other toy entry points.
pub fn synth_corpus(cfg: &SynthCorpusConfig) -> Result<SynthCorpus> {
    SynthCorpus::new(cfg)
}
