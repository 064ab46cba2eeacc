use std::sync::Arc;

use log::{info, warn};

use super::config::{EndpointSpec, StimulusOptions, SweepConfig};
use super::store::{summarize, ResultsStore, RunKey, SummaryParams};
use crate::error::{Error, Result};
use crate::metrics::{score_vignette, RetrievalScore};
use crate::provider::http::HttpProvider;
use crate::provider::{score_all, LogprobProvider};
use super::report::{ABSTRACT_SET, CONCRETE_SET};
use crate::stimulus::{generate_arbitrary_set, generate_concreteness_sets, Condition, StimulusSet};
use crate::toylm::{list_checkpoints, ToyCheckpoint, ToyProvider, ToyVocab};
use crate::wordpool::{load_noun_pool, select_extremes, ConcretenessNorms, NounPool};

/// Label of the arbitrary-noun stimulus set in the results store.
pub const ARBITRARY_SET: &str = "arbitrary";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub model: String,
    pub revision: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOutcome {
    pub written: Vec<RunKey>,
    pub skipped: Vec<RunKey>,
    pub failures: Vec<SweepFailure>,
}

impl SweepOutcome {
    /// 0 when everything finished, 2 when any pair failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn merge(&mut self, other: SweepOutcome) {
        self.written.extend(other.written);
        self.skipped.extend(other.skipped);
        self.failures.extend(other.failures);
    }
}

/// The pool named in `opts`, or the toy vocabulary's nouns.
pub fn stimulus_pool(opts: &StimulusOptions) -> Result<NounPool> {
    match &opts.pool {
        Some(path) => load_noun_pool(path),
        None => {
            let vocab = ToyVocab::builtin(crate::toylm::ToyConfig::default().vocab_size)?;
            let nouns = vocab.nouns();
            NounPool::from_lines("toy", nouns.iter().map(String::as_str))
        }
    }
}

/// Loads or generates the arbitrary-noun set described by `opts`.
pub fn build_stimuli(opts: &StimulusOptions, condition: Condition) -> Result<StimulusSet> {
    if let Some(path) = &opts.stimuli {
        let set = StimulusSet::load(path)?;
        if let Some(c) = set.condition() {
            if c != condition {
                return Err(Error::Stimulus(format!(
                    "{} holds {c} vignettes, sweep asks for {condition}",
                    path.display()
                )));
            }
        }
        return Ok(set);
    }
    generate_arbitrary_set(&stimulus_pool(opts)?, opts.set, condition, opts.seed)
}

/// One revision of one endpoint, ready to score.
struct Target {
    revision: String,
    step: u64,
    tokens_seen: u64,
    provider: Result<Box<dyn LogprobProvider>>,
}

fn http_targets(ep: &crate::provider::http::ProviderEndpoint, cfg: &SweepConfig) -> Vec<Target> {
    cfg.steps
        .iter()
        .map(|&step| {
            let revision = format!("step{step}");
            Target {
                provider: HttpProvider::new(ep.with_revision(&revision))
                    .map(|p| Box::new(p) as Box<dyn LogprobProvider>),
                revision,
                step,
                tokens_seen: step * cfg.tokens_per_step,
            }
        })
        .collect()
}

fn toy_targets(dir: &std::path::Path, model: &str) -> Result<Vec<Target>> {
    let found = list_checkpoints(dir)?;
    if found.is_empty() {
        return Err(Error::Invalid(format!("no checkpoints in {}", dir.display())));
    }
    Ok(found
        .into_iter()
        .map(|(step, path)| {
            let ckpt = ToyCheckpoint::load(&path);
            Target {
                revision: format!("step{step}"),
                step,
                tokens_seen: ckpt.as_ref().map_or(0, |c| c.tokens_seen),
                provider: ckpt.map(|c| Box::new(ToyProvider::new(Arc::new(c), model)) as Box<dyn LogprobProvider>),
            }
        })
        .collect())
}

/// Scores one short text against the first target to catch dead endpoints early.
fn preflight(label: &str, targets: &[Target], probe: &str) -> Result<()> {
    let first = targets
        .first()
        .ok_or_else(|| Error::Invalid(format!("{label}: nothing to sweep")))?;
    match &first.provider {
        Ok(p) => p.score_labeled("preflight", probe).map(|_| ()),
        Err(e) => Err(Error::Invalid(format!("{label}: {e}"))),
    }
}

fn score_set(
    provider: &dyn LogprobProvider,
    set: &StimulusSet,
    cfg: &SweepConfig,
    inflight: usize,
) -> Result<Vec<RetrievalScore>> {
    let items: Vec<(String, String)> = set
        .vignettes
        .iter()
        .map(|v| (v.id.clone(), v.text.clone()))
        .collect();
    let scored = score_all(provider, &items, inflight);
    set.vignettes
        .iter()
        .zip(scored)
        .map(|(v, s)| score_vignette(v, &s?, cfg.subtoken_mode))
        .collect()
}

/// Scores `set` at every (endpoint, revision) of `cfg` and stores results
/// under `set_label`. Finished pairs are skipped unless `force`. A failing
/// pair is recorded and the sweep moves on; after a transport failure the
/// endpoint's remaining revisions are marked failed without retrying.
pub fn run_sweep_with(
    cfg: &SweepConfig,
    set: &StimulusSet,
    set_label: &str,
    force: bool,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let condition = set
        .condition()
        .ok_or_else(|| Error::Stimulus("stimulus set mixes conditions".into()))?;
    let store = ResultsStore::new(&cfg.output_dir);
    let params = SummaryParams {
        trim: cfg.trim,
        bootstrap_b: cfg.bootstrap_b,
        seed: cfg.bootstrap_seed,
    };
    let probe = set
        .vignettes
        .first()
        .map(|v| v.text.clone())
        .ok_or_else(|| Error::Stimulus("empty stimulus set".into()))?;

    let mut plans = Vec::new();
    for ep in &cfg.endpoints {
        let model = ep.label();
        let (targets, inflight) = match ep {
            EndpointSpec::Http(h) => (http_targets(h, cfg), cfg.max_inflight.min(h.max_inflight)),
            EndpointSpec::Toy(dir) => (toy_targets(dir, &model)?, cfg.max_inflight),
        };
        let pending = targets.iter().any(|t| {
            force
                || !store.is_done(&RunKey {
                    model: model.clone(),
                    set: set_label.into(),
                    condition,
                    revision: t.revision.clone(),
                })
        });
        if pending {
            preflight(&model, &targets, &probe)?;
        }
        plans.push((model, targets, inflight));
    }

    let mut outcome = SweepOutcome::default();
    for (model, targets, inflight) in plans {
        let mut dead: Option<String> = None;
        for t in targets {
            let key = RunKey {
                model: model.clone(),
                set: set_label.into(),
                condition,
                revision: t.revision.clone(),
            };
            if !force && store.is_done(&key) {
                outcome.skipped.push(key);
                continue;
            }
            let fail = |message: String| SweepFailure {
                model: model.clone(),
                revision: t.revision.clone(),
                message,
            };
            if let Some(reason) = &dead {
                outcome.failures.push(fail(format!("skipped: {reason}")));
                continue;
            }
            let result = t.provider.and_then(|p| {
                let scores = score_set(p.as_ref(), set, cfg, inflight)?;
                let row = summarize(&key, t.step, t.tokens_seen, &scores, params)?;
                store.write(&key, &scores, &row)?;
                Ok(row)
            });
            match result {
                Ok(row) => {
                    info!(
                        "{model} {} {set_label}/{condition}: L^r {:.1}% ({} degenerate)",
                        t.revision,
                        100.0 * row.lr,
                        row.n_degenerate
                    );
                    outcome.written.push(key);
                }
                Err(e) => {
                    warn!("{model} {}: {e}", t.revision);
                    if matches!(e, Error::Transport { .. }) {
                        dead = Some(format!("endpoint {model} unreachable"));
                    }
                    outcome.failures.push(fail(e.to_string()));
                }
            }
        }
    }
    Ok(outcome)
}

/// Builds the configured stimulus set and sweeps it.
pub fn run_sweep(cfg: &SweepConfig, force: bool) -> Result<SweepOutcome> {
    let set = build_stimuli(&cfg.stimuli, cfg.condition)?;
    run_sweep_with(cfg, &set, ARBITRARY_SET, force)
}

/// How the concreteness sets are drawn from a norms table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConcretenessOptions {
    /// Words per category.
    pub n: usize,
    /// Nouns per list.
    pub cap: usize,
    pub seed: u64,
    pub allow_any_size: bool,
}

impl Default for ConcretenessOptions {
    fn default() -> Self {
        Self {
            n: 500,
            cap: 3,
            seed: 0,
            allow_any_size: false,
        }
    }
}

/// Concrete and abstract stimulus sets from the extremes of `norms`.
pub fn concreteness_stimuli(
    norms: &ConcretenessNorms,
    opts: ConcretenessOptions,
    condition: Condition,
) -> Result<(StimulusSet, StimulusSet)> {
    let extremes = select_extremes(norms, opts.n)?;
    generate_concreteness_sets(&extremes, opts.cap, condition, opts.seed, opts.allow_any_size)
}

/// Sweeps both concreteness sets; the report derives their difference.
pub fn run_concreteness(
    cfg: &SweepConfig,
    norms: &ConcretenessNorms,
    opts: ConcretenessOptions,
    force: bool,
) -> Result<SweepOutcome> {
    let (concrete, abstract_) = concreteness_stimuli(norms, opts, cfg.condition)?;
    let mut outcome = run_sweep_with(cfg, &concrete, CONCRETE_SET, force)?;
    outcome.merge(run_sweep_with(cfg, &abstract_, ABSTRACT_SET, force)?);
    Ok(outcome)
}
