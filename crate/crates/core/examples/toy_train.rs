//! Trains the toy transformer and reports held-out loss at each checkpoint.
//!
//! ```text
//! cargo run --release --example toy_train -- [steps] [checkpoint-dir]
//! ```

use std::path::PathBuf;

use reprobe::toylm::{heldout_loss, list_checkpoints, train_to_dir, ToyCheckpoint, ToyRunConfig};

fn main() -> reprobe::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1024);
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("reprobe-toy"));

    let mut run = ToyRunConfig::default();
    run.train.steps = steps;
    run.train.checkpoint_steps.retain(|&s| s < steps);
    run.train.checkpoint_steps.push(steps);
    let n_params = reprobe::toylm::init_params(&run.model)?.data().len();
    println!("{n_params} parameters, {} tokens per step", run.train.batch_tokens);

    let t0 = std::time::Instant::now();
    let written = train_to_dir(&run, &dir, false)?;
    println!("{} new checkpoints in {:.1}s under {}", written.len(), t0.elapsed().as_secs_f64(), dir.display());

    for (step, path) in list_checkpoints(&dir)? {
        let ckpt = ToyCheckpoint::load(&path)?;
        let bits = heldout_loss(&ckpt.params, &run.corpus, 16)? / std::f64::consts::LN_2;
        println!("step {step:6}  tokens {:9}  held-out {bits:.3} bits/token", ckpt.tokens_seen);
    }
    Ok(())
}
