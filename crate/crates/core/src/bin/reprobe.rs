use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use reprobe::metrics::{score_vignette, write_scores_jsonl, SubtokenMode};
use reprobe::provider::http::{HttpProvider, ProviderEndpoint};
use reprobe::provider::{score_all, LogprobProvider};
use reprobe::stimulus::{Condition, StimulusSet};
use reprobe::sweep::{self, ResultsStore, RunKey, SummaryParams, SweepConfig, SweepOutcome};
use reprobe::toylm::{train_to_dir, ToyCheckpoint, ToyProvider, ToyRunConfig};
use reprobe::wordpool::{load_concreteness_norms_with, DEFAULT_RATING_COLUMN, DEFAULT_WORD_COLUMN};
use reprobe::{Error, Result};

#[derive(Parser)]
#[command(name = "reprobe", version, about = "Verbatim in-context retrieval probes for language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the arbitrary-noun vignette set as JSON Lines.
    GenStimuli(GenStimuli),
    /// Train the toy transformer and write checkpoints.
    ToyTrain(ToyTrain),
    /// Score one stimulus file against one model revision.
    Score(Score),
    /// Score stimuli across endpoints and checkpoints.
    Sweep(SweepArgs),
    /// Validate benchmark accuracy CSVs and store them with the results.
    ImportBenchmarks(ImportBenchmarks),
    /// Correlate retrieval and benchmark learning trajectories.
    Correlate(Correlate),
    /// Build concrete/abstract stimulus sets from norms, optionally sweeping them.
    Concreteness(Concreteness),
    /// Write CSV tables and SVG charts for a results directory.
    Report(Report),
}

#[derive(Args)]
struct GenStimuli {
    /// Noun pool, one word per line. Defaults to the toy vocabulary nouns.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "repeat")]
    condition: Condition,
    #[arg(long)]
    out: PathBuf,
    /// Overwrite an existing output file.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ToyTrain {
    /// JSON with optional `model`, `corpus` and `train` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
    /// Discard checkpoints already in the directory instead of resuming.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Aggregation {
    #[arg(long)]
    trim: Option<f64>,
    #[arg(long)]
    bootstrap_b: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Score {
    /// Stimuli written by gen-stimuli.
    #[arg(long)]
    stimuli: PathBuf,
    /// Toy checkpoint file; otherwise the HTTP provider is used.
    #[arg(long, conflicts_with_all = ["url", "model", "revision"])]
    toy: Option<PathBuf>,
    /// Provider base URL (default: $REPROBE_PROVIDER_URL).
    #[arg(long)]
    url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    revision: Option<String>,
    /// Per-vignette scores (JSON Lines).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
    #[arg(long, default_value = "sum")]
    subtoken_mode: SubtokenMode,
    #[arg(long, default_value_t = 4)]
    max_inflight: usize,
    #[command(flatten)]
    agg: Aggregation,
}

#[derive(Args)]
struct SweepOverrides {
    #[arg(long)]
    config: PathBuf,
    /// Results directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-score pairs that already have results.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    condition: Option<Condition>,
    #[arg(long)]
    subtoken_mode: Option<SubtokenMode>,
    #[command(flatten)]
    agg: Aggregation,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    sweep: SweepOverrides,
}

#[derive(Args)]
struct ImportBenchmarks {
    /// Directory of `model,task_key,step,accuracy` CSV files.
    dir: PathBuf,
    /// Results directory to store the records in.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Correlate {
    /// Results directory holding summaries and imported benchmarks.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "repeat")]
    condition: Condition,
    #[arg(long, default_value_t = reprobe::stats::DEFAULT_BOOTSTRAP_B)]
    bootstrap_b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Concreteness {
    /// Norms table with a word column and a rating column.
    #[arg(long)]
    norms: PathBuf,
    #[arg(long, default_value = DEFAULT_WORD_COLUMN)]
    word_column: String,
    #[arg(long, default_value = DEFAULT_RATING_COLUMN)]
    rating_column: String,
    /// Words per category.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Accept categories other than 500 words.
    #[arg(long)]
    allow_any_size: bool,
    /// Sweep configuration; without it only the stimulus files are written.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (stimuli, or results when sweeping).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
    #[arg(long)]
    condition: Option<Condition>,
    #[arg(long)]
    subtoken_mode: Option<SubtokenMode>,
    #[command(flatten)]
    agg: Aggregation,
}

#[derive(Args)]
struct Report {
    /// Results directory.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the report (default: <out>/report).
    #[arg(long)]
    report_dir: Option<PathBuf>,
}

/// Failure that maps to an exit code.
enum Fail {
    Usage(String),
    Run(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::NoResults
            | Error::Invalid(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Io { .. }
            | Error::WordPool(_)
            | Error::NormsRow { .. }
            | Error::Stimulus(_)
            | Error::Benchmark { .. }
            | Error::Toy(_)
            | Error::Checkpoint(_) => Fail::Usage(e.to_string()),
            other => Fail::Run(other),
        }
    }
}

type CliResult = std::result::Result<ExitCode, Fail>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenStimuli(a) => gen_stimuli(a),
        Command::ToyTrain(a) => toy_train(a),
        Command::Score(a) => score(a),
        Command::Sweep(a) => run_sweep(a),
        Command::ImportBenchmarks(a) => import_benchmarks(a),
        Command::Correlate(a) => correlate(a),
        Command::Concreteness(a) => concreteness(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => code,
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Fail::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn refuse_overwrite(path: &Path, force: bool) -> std::result::Result<(), Fail> {
    if path.exists() && !force {
        return Err(Fail::Usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn gen_stimuli(a: GenStimuli) -> CliResult {
    refuse_overwrite(&a.out, a.force)?;
    let opts = sweep::StimulusOptions {
        pool: a.pool,
        seed: a.seed,
        ..Default::default()
    };
    let set = sweep::build_stimuli(&opts, a.condition)?;
    set.save(&a.out)?;
    info!("wrote {} {} vignettes to {}", set.len(), a.condition, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn toy_train(a: ToyTrain) -> CliResult {
    let mut run = match &a.config {
        Some(path) => serde_json::from_slice::<ToyRunConfig>(&read(path)?).map_err(Error::from)?,
        None => ToyRunConfig::default(),
    };
    if let Some(seed) = a.seed {
        run = run.with_seed(seed);
    }
    let written = train_to_dir(&run, &a.out, a.force)?;
    info!("{} checkpoints written to {}", written.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn score(a: Score) -> CliResult {
    refuse_overwrite(&a.out, a.force)?;
    let set = StimulusSet::load(&a.stimuli)?;
    let (provider, step, tokens_seen): (Box<dyn LogprobProvider>, u64, u64) = match &a.toy {
        Some(path) => {
            let ckpt = ToyCheckpoint::load(path)?;
            let (step, tokens) = (ckpt.step, ckpt.tokens_seen);
            (Box::new(ToyProvider::new(Arc::new(ckpt), "toy")), step, tokens)
        }
        None => {
            let model = a.model.clone().ok_or_else(|| Fail::Usage("--model is required without --toy".into()))?;
            let revision = a.revision.clone().unwrap_or_else(|| "main".into());
            let ep = match &a.url {
                Some(url) => ProviderEndpoint::new(url, &model, &revision),
                None => ProviderEndpoint::from_env(&model, &revision)?,
            };
            let step = revision.strip_prefix("step").and_then(|s| s.parse().ok()).unwrap_or(0);
            (Box::new(HttpProvider::new(ep)?), step, step * sweep::PYTHIA_TOKENS_PER_STEP)
        }
    };
    let items: Vec<(String, String)> = set.vignettes.iter().map(|v| (v.id.clone(), v.text.clone())).collect();
    let scored = score_all(provider.as_ref(), &items, a.max_inflight);
    let mut scores = Vec::with_capacity(items.len());
    let mut failed = 0;
    for (v, s) in set.vignettes.iter().zip(scored) {
        match s.and_then(|s| score_vignette(v, &s, a.subtoken_mode)) {
            Ok(r) => scores.push(r),
            Err(e) => {
                error!("{}: {e}", v.id);
                failed += 1;
            }
        }
    }
    let mut buf = Vec::new();
    write_scores_jsonl(&scores, &mut buf)?;
    std::fs::write(&a.out, buf).map_err(|source| Error::Io {
        path: a.out.clone(),
        source,
    })?;
    let key = RunKey {
        model: provider.model_id().to_string(),
        set: "stimuli".into(),
        condition: set.condition().unwrap_or(Condition::Repeat),
        revision: provider.revision().to_string(),
    };
    let params = SummaryParams {
        trim: a.agg.trim.unwrap_or(reprobe::stats::DEFAULT_TRIM),
        bootstrap_b: a.agg.bootstrap_b.unwrap_or(reprobe::stats::DEFAULT_BOOTSTRAP_B),
        seed: a.agg.seed.unwrap_or(0),
    };
    if scores.len() >= 2 {
        let row = sweep::store::summarize(&key, step, tokens_seen, &scores, params)?;
        println!("{}", serde_json::to_string_pretty(&row).map_err(Error::from)?);
    }
    if failed > 0 {
        error!("{failed} of {} vignettes failed", items.len());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn load_sweep(o: &SweepOverrides) -> std::result::Result<SweepConfig, Fail> {
    let mut cfg = SweepConfig::load(&o.config)?;
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
    if let Some(c) = o.condition {
        cfg.condition = c;
    }
    if let Some(m) = o.subtoken_mode {
        cfg.subtoken_mode = m;
    }
    if let Some(t) = o.agg.trim {
        cfg.trim = t;
    }
    if let Some(b) = o.agg.bootstrap_b {
        cfg.bootstrap_b = b;
    }
    if let Some(s) = o.agg.seed {
        cfg.bootstrap_seed = s;
        cfg.stimuli.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(outcome: &SweepOutcome) -> ExitCode {
    info!(
        "{} written, {} already present, {} failed",
        outcome.written.len(),
        outcome.skipped.len(),
        outcome.failures.len()
    );
    for f in &outcome.failures {
        error!("{} {}: {}", f.model, f.revision, f.message);
    }
    ExitCode::from(outcome.exit_code() as u8)
}

fn run_sweep(a: SweepArgs) -> CliResult {
    let cfg = load_sweep(&a.sweep)?;
    let outcome = sweep::run_sweep(&cfg, a.sweep.force)?;
    Ok(finish(&outcome))
}

fn import_benchmarks(a: ImportBenchmarks) -> CliResult {
    let records = sweep::import_benchmarks(&a.dir)?;
    if records.is_empty() {
        return Err(Fail::Usage(format!("no benchmark rows in {}", a.dir.display())));
    }
    let store = ResultsStore::new(&a.out);
    std::fs::create_dir_all(&a.out).map_err(|source| Error::Io {
        path: a.out.clone(),
        source,
    })?;
    let path = store.benchmarks_path();
    std::fs::write(&path, serde_json::to_vec_pretty(&records).map_err(Error::from)?)
        .map_err(|source| Error::Io { path: path.clone(), source })?;
    let tasks: std::collections::BTreeSet<_> = records.iter().map(|r| &r.task_key).collect();
    let models: std::collections::BTreeSet<_> = records.iter().map(|r| &r.model).collect();
    info!(
        "{} records, {} tasks, {} models -> {}",
        records.len(),
        tasks.len(),
        models.len(),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn correlate(a: Correlate) -> CliResult {
    let store = ResultsStore::new(&a.out);
    let rows = store.summaries()?;
    if rows.is_empty() {
        return Err(Error::NoResults.into());
    }
    let records: Vec<sweep::BenchmarkRecord> =
        serde_json::from_slice(&read(&store.benchmarks_path())?).map_err(Error::from)?;
    let retrieval = sweep::retrieval_trajectories(&rows, sweep::ARBITRARY_SET, a.condition)?;
    let result = sweep::correlate_all(&retrieval, &records, a.bootstrap_b, a.seed)?;
    let mut buf = Vec::new();
    sweep::write_correlations_csv(&result, &mut buf)?;
    let path = store.correlations_path();
    std::fs::write(&path, buf).map_err(|source| Error::Io { path: path.clone(), source })?;
    info!("{} correlations -> {}", result.len(), path.display());
    if result.is_empty() {
        return Err(Fail::Usage("no correlations computed".into()));
    }
    Ok(ExitCode::SUCCESS)
}

fn concreteness(a: Concreteness) -> CliResult {
    let norms = load_concreteness_norms_with(&a.norms, &a.word_column, &a.rating_column)?;
    let mut opts = sweep::ConcretenessOptions {
        n: a.n,
        allow_any_size: a.allow_any_size,
        ..Default::default()
    };
    let Some(config) = &a.config else {
        let out = a.out.clone().ok_or_else(|| Fail::Usage("--out or --config is required".into()))?;
        opts.seed = a.agg.seed.unwrap_or(0);
        let condition = a.condition.unwrap_or(Condition::Repeat);
        let (c, ab) = sweep::concreteness_stimuli(&norms, opts, condition)?;
        for (set, name) in [(&c, sweep::CONCRETE_SET), (&ab, sweep::ABSTRACT_SET)] {
            let path = out.join(format!("{name}-{condition}.jsonl"));
            refuse_overwrite(&path, a.force)?;
            set.save(&path)?;
            info!("wrote {} vignettes to {}", set.len(), path.display());
        }
        return Ok(ExitCode::SUCCESS);
    };
    let cfg = load_sweep(&SweepOverrides {
        config: config.clone(),
        out: a.out.clone(),
        force: a.force,
        condition: a.condition,
        subtoken_mode: a.subtoken_mode,
        agg: a.agg,
    })?;
    opts.seed = cfg.stimuli.seed;
    let outcome = sweep::run_concreteness(&cfg, &norms, opts, a.force)?;
    Ok(finish(&outcome))
}

fn report(a: Report) -> CliResult {
    let store = ResultsStore::new(&a.out);
    let dir = a.report_dir.unwrap_or_else(|| a.out.join("report"));
    let files = sweep::write_report(&store, &dir)?;
    for f in &files.files {
        println!("{}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}
