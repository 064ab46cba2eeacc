pub mod error;
mod fsio;
pub mod metrics;
pub mod provider;
pub mod stats;
pub mod stimulus;
pub mod sweep;
pub mod toylm;
pub mod wordpool;

pub use error::{Error, Result};
