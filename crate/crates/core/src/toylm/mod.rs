//! Desk-scale decoder-only transformer, synthetic repetition corpus and an
//! in-process provider, so the whole measurement pipeline runs without an
//! external model.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod model;
pub mod params;
pub mod provider;
pub mod train;
pub mod vocab;

pub use checkpoint::{list_checkpoints, ToyCheckpoint};
pub use config::{SynthCorpusConfig, ToyConfig, ToyRunConfig, TrainConfig};
pub use corpus::{synth_corpus, SynthCorpus, SynthSequence};
pub use model::{batch_loss, forward, grad, loss_bits, GradOutput};
pub use params::{init_params, ToyParams};
pub use provider::{toy_provider, ToyProvider};
pub use train::{heldout_loss, train, train_to_dir, Trainer};
pub use vocab::ToyVocab;
