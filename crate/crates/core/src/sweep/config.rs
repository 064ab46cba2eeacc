use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SubtokenMode;
use crate::provider::http::ProviderEndpoint;
use crate::stats::{DEFAULT_BOOTSTRAP_B, DEFAULT_TRIM};
use crate::stimulus::{ArbitrarySetParams, Condition};

/// Training steps of the published Pythia checkpoints evaluated by default.
pub const PYTHIA_STEPS: [u64; 18] = [
    0, 1, 4, 32, 128, 256, 512, 1000, 2000, 3000, 4000, 8000, 10000, 30000, 40000, 50000,
    100000, 143000,
];

/// Tokens consumed per Pythia optimizer step.
pub const PYTHIA_TOKENS_PER_STEP: u64 = 2_097_152;

/// Where scores come from: a `/v1/score` server or a directory of toy checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEndpoint", into = "RawEndpoint")]
pub enum EndpointSpec {
    Http(ProviderEndpoint),
    Toy(PathBuf),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawEndpoint {
    Toy(String),
    Http(ProviderEndpoint),
}

impl TryFrom<RawEndpoint> for EndpointSpec {
    type Error = String;

    fn try_from(raw: RawEndpoint) -> std::result::Result<Self, String> {
        match raw {
            RawEndpoint::Http(ep) => Ok(Self::Http(ep)),
            RawEndpoint::Toy(s) => s.parse().map_err(|e: Error| e.to_string()),
        }
    }
}

impl From<EndpointSpec> for RawEndpoint {
    fn from(spec: EndpointSpec) -> Self {
        match spec {
            EndpointSpec::Http(ep) => RawEndpoint::Http(ep),
            EndpointSpec::Toy(dir) => RawEndpoint::Toy(format!("toy:{}", dir.display())),
        }
    }
}

impl std::str::FromStr for EndpointSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("toy:") {
            Some(dir) if !dir.is_empty() => Ok(Self::Toy(dir.into())),
            _ => Err(Error::Invalid(format!(
                "endpoint string {s:?} must look like toy:<checkpoint-dir>"
            ))),
        }
    }
}

impl EndpointSpec {
    /// Directory-safe label used in the results store.
    pub fn label(&self) -> String {
        match self {
            Self::Http(ep) => ep.model_id.clone(),
            Self::Toy(dir) => format!(
                "toy-{}",
                dir.file_name().and_then(|n| n.to_str()).unwrap_or("model")
            ),
        }
    }
}

/// Which vignettes to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StimulusOptions {
    /// Noun pool file; the toy vocabulary nouns when absent.
    pub pool: Option<PathBuf>,
    /// Pre-rendered stimuli (JSON Lines); overrides `pool`.
    pub stimuli: Option<PathBuf>,
    pub set: ArbitrarySetParams,
    pub seed: u64,
}

impl Default for StimulusOptions {
    fn default() -> Self {
        Self {
            pool: None,
            stimuli: None,
            set: ArbitrarySetParams::default(),
            seed: 0,
        }
    }
}

/// A sweep over endpoints and checkpoints.
///
/// `steps` applies to HTTP endpoints. Toy endpoints evaluate every
/// checkpoint found in their directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub endpoints: Vec<EndpointSpec>,
    pub steps: Vec<u64>,
    pub tokens_per_step: u64,
    pub stimuli: StimulusOptions,
    pub condition: Condition,
    pub subtoken_mode: SubtokenMode,
    pub trim: f64,
    pub bootstrap_b: usize,
    pub bootstrap_seed: u64,
    pub output_dir: PathBuf,
    pub max_inflight: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            endpoints: Vec::new(),
            steps: PYTHIA_STEPS.to_vec(),
            tokens_per_step: PYTHIA_TOKENS_PER_STEP,
            stimuli: StimulusOptions::default(),
            condition: Condition::Repeat,
            subtoken_mode: SubtokenMode::Sum,
            trim: DEFAULT_TRIM,
            bootstrap_b: DEFAULT_BOOTSTRAP_B,
            bootstrap_seed: 0,
            output_dir: PathBuf::from("results"),
            max_inflight: 4,
        }
    }
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(&crate::fsio::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut sorted = self.steps.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.steps.len() {
            return Err(Error::Invalid("sweep steps must be unique".into()));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::Invalid(format!("trim {} outside [0, 0.5)", self.trim)));
        }
        if self.bootstrap_b < crate::stats::MIN_BOOTSTRAP_B {
            return Err(Error::Invalid(format!(
                "bootstrap_b must be at least {}",
                crate::stats::MIN_BOOTSTRAP_B
            )));
        }
        if self.max_inflight == 0 {
            return Err(Error::Invalid("max_inflight must be at least 1".into()));
        }
        for ep in &self.endpoints {
            if let EndpointSpec::Http(h) = ep {
                h.validate()?;
            }
        }
        Ok(())
    }
}
