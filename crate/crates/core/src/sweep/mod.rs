//! End-to-end orchestration: scoring sweeps over endpoints and checkpoints,
//! benchmark ingestion, trajectory correlation and static reports.

pub mod benchmarks;
pub mod config;
pub mod correlate;
pub mod report;
pub mod run;
pub mod store;
pub mod svg;

pub use benchmarks::{import_benchmarks, BenchmarkRecord, LAMBADA_CHANCE};
pub use config::{EndpointSpec, StimulusOptions, SweepConfig, PYTHIA_STEPS, PYTHIA_TOKENS_PER_STEP};
pub use correlate::{correlate_all, retrieval_trajectories, write_correlations_csv, CorrelationRow};
pub use report::{concreteness_deltas, write_report, ReportFiles, ABSTRACT_SET, CONCRETE_SET};
pub use run::{
    build_stimuli, concreteness_stimuli, run_concreteness, stimulus_pool, run_sweep, run_sweep_with, ConcretenessOptions,
    SweepFailure, SweepOutcome, ARBITRARY_SET,
};
pub use store::{ResultsStore, RunKey, SummaryParams, SummaryRow};
