//! Generates the arbitrary-noun vignette set and prints one vignette with its spans.
//!
//! ```text
//! cargo run --example stimuli -- [noun-pool.txt] [out.jsonl]
//! ```

use std::path::PathBuf;

use reprobe::stimulus::{generate_arbitrary_set, ArbitrarySetParams, Condition};
use reprobe::sweep::{stimulus_pool, StimulusOptions};
use reprobe::wordpool::load_noun_pool;

fn main() -> reprobe::Result<()> {
    let mut args = std::env::args().skip(1);
    let pool = match args.next() {
        Some(path) => load_noun_pool(&PathBuf::from(path))?,
        None => stimulus_pool(&StimulusOptions::default())?,
    };
    println!("pool {:?}: {} nouns, sha256 {}", pool.name, pool.len(), &pool.content_hash()[..12]);

    let params = ArbitrarySetParams::default();
    let repeat = generate_arbitrary_set(&pool, params, Condition::Repeat, 0)?;
    let control = generate_arbitrary_set(&pool, params, Condition::Control, 0)?;
    println!("{} repeat and {} control vignettes", repeat.len(), control.len());

    for v in [&repeat.vignettes[11], &control.vignettes[11]] {
        println!("\n{} ({})\n  {}", v.id, v.condition, v.text);
        for (a, b) in v.first_list.iter().zip(&v.second_list) {
            println!("  {:>12} [{:3}, {:3})   {:>12} [{:3}, {:3})", a.w, a.s, a.e, b.w, b.s, b.e);
        }
    }

    if let Some(out) = args.next() {
        repeat.save(&PathBuf::from(&out))?;
        println!("\nwrote {out}");
    }
    Ok(())
}
