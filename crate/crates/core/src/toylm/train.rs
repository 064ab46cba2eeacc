//! Adam training loop with log-spaced checkpoints.

use super::checkpoint::{RngState, ToyCheckpoint};
use super::config::{SynthCorpusConfig, ToyConfig, ToyRunConfig, TrainConfig};
use super::corpus::SynthCorpus;
use super::model;
use super::params::{init_params, ToyParams};
use super::vocab::ToyVocab;
use crate::error::{Error, Result};

pub struct Trainer {
    train_cfg: TrainConfig,
    corpus_cfg: SynthCorpusConfig,
    params: ToyParams,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    corpus: SynthCorpus,
    vocab: ToyVocab,
}

impl Trainer {
    pub fn new(
        cfg: &ToyConfig,
        corpus_cfg: &SynthCorpusConfig,
        train_cfg: &TrainConfig,
    ) -> Result<Self> {
        train_cfg.validate(corpus_cfg.seq_len)?;
        let params = init_params(cfg)?;
        let n = params.data().len();
        Ok(Self {
            train_cfg: train_cfg.clone(),
            corpus_cfg: corpus_cfg.clone(),
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            corpus: SynthCorpus::new(corpus_cfg)?,
            vocab: ToyVocab::builtin(cfg.vocab_size)?,
        })
    }

    /// Resumes from a saved checkpoint, continuing the corpus stream where it stopped.
    pub fn resume(ckpt: &ToyCheckpoint, train_cfg: &TrainConfig) -> Result<Self> {
        train_cfg.validate(ckpt.corpus.seq_len)?;
        let mut corpus = SynthCorpus::new(&ckpt.corpus)?;
        corpus.set_rng(ckpt.rng.restore());
        Ok(Self {
            train_cfg: train_cfg.clone(),
            corpus_cfg: ckpt.corpus.clone(),
            params: ckpt.params.clone(),
            m: ckpt.adam_m.clone(),
            v: ckpt.adam_v.clone(),
            step: ckpt.step,
            corpus,
            vocab: ckpt.vocab.clone(),
        })
    }

    pub fn params(&self) -> &ToyParams {
        &self.params
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn seqs_per_batch(&self) -> usize {
        self.train_cfg.batch_tokens / self.corpus_cfg.seq_len
    }

    /// One optimizer update; returns the batch loss in nats before the update.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.corpus.batch(self.seqs_per_batch());
        let out = model::grad(&self.params, &batch)?;
        let tc = &self.train_cfg;
        let t = (self.step + 1) as f64;
        let warm = if tc.warmup_steps == 0 {
            1.0
        } else {
            (t / tc.warmup_steps as f64).min(1.0)
        };
        let lr = tc.lr * warm;
        let bc1 = 1.0 - tc.beta1.powf(t);
        let bc2 = 1.0 - tc.beta2.powf(t);
        let data = self.params.data_mut();
        for i in 0..data.len() {
            let g = out.grad[i];
            self.m[i] = tc.beta1 * self.m[i] + (1.0 - tc.beta1) * g;
            self.v[i] = tc.beta2 * self.v[i] + (1.0 - tc.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            data[i] -= lr * mhat / (vhat.sqrt() + tc.eps);
        }
        self.step += 1;
        Ok(out.loss)
    }

    pub fn checkpoint(&self) -> ToyCheckpoint {
        ToyCheckpoint {
            params: self.params.clone(),
            step: self.step,
            tokens_seen: self.step * self.train_cfg.batch_tokens as u64,
            batch_tokens: self.train_cfg.batch_tokens as u64,
            corpus: self.corpus_cfg.clone(),
            vocab: self.vocab.clone(),
            adam_m: self.m.clone(),
            adam_v: self.v.clone(),
            rng: RngState::capture(self.corpus.rng()),
        }
    }

    /// Trains up to `train_cfg.steps`, handing every scheduled checkpoint to
    /// `on_checkpoint`. Returns the per-step training losses (nats).
    pub fn run(
        &mut self,
        mut on_checkpoint: impl FnMut(&ToyCheckpoint) -> Result<()>,
    ) -> Result<Vec<f64>> {
        let schedule = self.train_cfg.checkpoint_steps.clone();
        let mut losses = Vec::with_capacity((self.train_cfg.steps - self.step) as usize);
        loop {
            if schedule.binary_search(&self.step).is_ok() {
                on_checkpoint(&self.checkpoint())?;
            }
            if self.step >= self.train_cfg.steps {
                break;
            }
            let loss = self.step()?;
            if self.step % 256 == 0 {
                log::debug!("step {} loss {:.4} nats", self.step, loss);
            }
            losses.push(loss);
        }
        Ok(losses)
    }
}

/// Trains from scratch and returns every scheduled checkpoint in step order.
pub fn train(
    cfg: &ToyConfig,
    corpus_cfg: &SynthCorpusConfig,
    train_cfg: &TrainConfig,
) -> Result<Vec<ToyCheckpoint>> {
    let mut trainer = Trainer::new(cfg, corpus_cfg, train_cfg)?;
    let mut out = Vec::new();
    trainer.run(|c| {
        out.push(c.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Trains into `dir`, writing `step<N>.ckpt` at every scheduled step.
///
/// An existing run in `dir` is resumed from its latest checkpoint, unless
/// `force` is set, in which case existing checkpoints are replaced. Returns
/// the steps written by this call.
pub fn train_to_dir(run: &ToyRunConfig, dir: &std::path::Path, force: bool) -> Result<Vec<u64>> {
    run.validate()?;
    let existing = if dir.is_dir() {
        super::checkpoint::list_checkpoints(dir)?
    } else {
        Vec::new()
    };
    let mut trainer = match existing.last() {
        Some((_, path)) if !force => {
            let ckpt = ToyCheckpoint::load(path)?;
            if ckpt.params.config() != &run.model || ckpt.corpus != run.corpus {
                return Err(Error::Toy(format!(
                    "{} holds a run with a different configuration; use force to replace it",
                    dir.display()
                )));
            }
            log::info!("resuming from step {}", ckpt.step);
            Trainer::resume(&ckpt, &run.train)?
        }
        _ => {
            for (_, path) in &existing {
                std::fs::remove_file(path).map_err(|e| Error::io(path, e))?;
            }
            Trainer::new(&run.model, &run.corpus, &run.train)?
        }
    };
    let resumed_at = existing.last().filter(|_| !force).map(|(s, _)| *s);
    let mut written = Vec::new();
    trainer.run(|c| {
        if Some(c.step) == resumed_at {
            return Ok(());
        }
        c.save(&dir.join(ToyCheckpoint::file_name(c.step)))?;
        log::info!("step {} ({} tokens) saved", c.step, c.tokens_seen);
        written.push(c.step);
        Ok(())
    })?;
    Ok(written)
}

/// Mean natural-log loss of `params` on a fixed held-out batch drawn from a
/// separate stream of the corpus generator.
pub fn heldout_loss(params: &ToyParams, corpus_cfg: &SynthCorpusConfig, n_seqs: usize) -> Result<f64> {
    let mut corpus = SynthCorpus::with_stream(corpus_cfg, 1)?;
    model::batch_loss(params, &corpus.batch(n_seqs))
}
