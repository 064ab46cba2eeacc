//! End to end on the toy model: train, sweep both conditions, write the report.
//!
//! ```text
//! cargo run --release --example toy_sweep -- [steps] [out-dir]
//! ```

use std::path::PathBuf;

use reprobe::stimulus::Condition;
use reprobe::sweep::{run_sweep, write_report, EndpointSpec, ResultsStore, SweepConfig};
use reprobe::toylm::{train_to_dir, ToyRunConfig};

fn main() -> reprobe::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(4096);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("reprobe-toy-sweep"));

    let mut run = ToyRunConfig::default();
    run.train.steps = steps;
    run.train.checkpoint_steps.retain(|&s| s < steps);
    run.train.checkpoint_steps.push(steps);
    let ckpts = out.join("toy");
    train_to_dir(&run, &ckpts, false)?;

    let mut cfg = SweepConfig {
        endpoints: vec![EndpointSpec::Toy(ckpts)],
        bootstrap_b: 1000,
        output_dir: out.join("results"),
        ..Default::default()
    };
    for condition in [Condition::Repeat, Condition::Control] {
        cfg.condition = condition;
        let outcome = run_sweep(&cfg, false)?;
        println!("{condition}: {} scored, {} already done", outcome.written.len(), outcome.skipped.len());
    }

    let store = ResultsStore::new(&cfg.output_dir);
    println!("\n{:>7} {:>10} {:>9} {:>17}", "step", "tokens", "condition", "L^r [95% CI]");
    for r in store.summaries()? {
        println!(
            "{:>7} {:>10} {:>9} {:>6.1}% [{:.1}, {:.1}]",
            r.step,
            r.tokens_seen,
            r.condition,
            100.0 * r.lr,
            100.0 * r.ci_lo,
            100.0 * r.ci_hi
        );
    }
    let report = write_report(&store, &out.join("report"))?;
    println!("\nreport: {}", report.dir.display());
    Ok(())
}
