use std::sync::Arc;

use super::checkpoint::ToyCheckpoint;
use super::model;
use crate::error::Result;
use crate::provider::{LogprobProvider, ScoredText, TokenScore};

/// In-process provider backed by a toy checkpoint.
#[derive(Clone)]
pub struct ToyProvider {
    ckpt: Arc<ToyCheckpoint>,
    model_id: String,
    revision: String,
}

impl ToyProvider {
    pub fn new(ckpt: Arc<ToyCheckpoint>, model_id: &str) -> Self {
        let revision = format!("step{}", ckpt.step);
        Self {
            ckpt,
            model_id: model_id.to_string(),
            revision,
        }
    }

    pub fn checkpoint(&self) -> &ToyCheckpoint {
        &self.ckpt
    }
}

/// Wraps a checkpoint as a provider named `toy`.
pub fn toy_provider(ckpt: ToyCheckpoint) -> ToyProvider {
    ToyProvider::new(Arc::new(ckpt), "toy")
}

impl LogprobProvider for ToyProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn revision(&self) -> &str {
        &self.revision
    }

    fn score_text(&self, text: &str) -> Result<ScoredText> {
        let encoded = self.ckpt.vocab.encode(text)?;
        let ids: Vec<u32> = encoded.iter().map(|(id, _)| *id).collect();
        let logp = model::forward(&self.ckpt.params, &ids)?;
        let tokens = encoded
            .iter()
            .enumerate()
            .map(|(i, (id, piece))| TokenScore {
                token_id: *id,
                token_text: text[piece.start..piece.end].to_string(),
                start: piece.start,
                end: piece.end,
                logprob: (i > 0).then(|| logp[[i - 1, *id as usize]]),
            })
            .collect();
        let scored = ScoredText {
            text: text.to_string(),
            model_id: self.model_id.clone(),
            revision: self.revision.clone(),
            tokens,
        };
        scored.validate("toy")?;
        Ok(scored)
    }
}
