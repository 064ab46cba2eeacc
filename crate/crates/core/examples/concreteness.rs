//! Concrete versus abstract stimulus sets from a norms table.
//!
//! ```text
//! cargo run --example concreteness -- norms.csv [rating-column]
//! ```
//!
//! Without arguments a synthetic norms table is used.

use std::path::PathBuf;

use reprobe::stats::{concreteness_delta, Trajectory};
use reprobe::stimulus::{generate_concreteness_sets, Condition};
use reprobe::wordpool::{load_concreteness_norms_with, select_extremes, ConcretenessNorms, DEFAULT_RATING_COLUMN, DEFAULT_WORD_COLUMN};

fn main() -> reprobe::Result<()> {
    let mut args = std::env::args().skip(1);
    let norms = match args.next() {
        Some(path) => {
            let column = args.next().unwrap_or_else(|| DEFAULT_RATING_COLUMN.to_string());
            load_concreteness_norms_with(&PathBuf::from(path), DEFAULT_WORD_COLUMN, &column)?
        }
        None => ConcretenessNorms::from_entries(
            (0..2000).map(|i| (format!("word{i:04}"), 1.0 + 4.0 * ((i * 7919) % 2000) as f64 / 1999.0)),
        )?,
    };
    let ext = select_extremes(&norms, 500)?;
    println!(
        "{} rated words; concrete ratings {:.2}..{:.2}, abstract {:.2}..{:.2}",
        norms.len(),
        ext.concrete.last().unwrap().1,
        ext.concrete[0].1,
        ext.abstract_[0].1,
        ext.abstract_.last().unwrap().1
    );

    let (concrete, abstract_) = generate_concreteness_sets(&ext, 3, Condition::Repeat, 0, false)?;
    println!("{} concrete and {} abstract vignettes", concrete.len(), abstract_.len());
    println!("  {}\n  {}", concrete.vignettes[0].text, abstract_.vignettes[0].text);

    // The delta the report plots, on made-up sweep results.
    let steps = [0u64, 1000, 2000, 4000];
    let c = Trajectory::new("concrete", steps.iter().zip([0.01, 0.30, 0.85, 0.90]).map(|(&s, v)| (s, v)).collect())?;
    let a = Trajectory::new("abstract", steps.iter().zip([0.01, 0.18, 0.76, 0.88]).map(|(&s, v)| (s, v)).collect())?;
    for (s, d) in concreteness_delta(&c, &a)?.points {
        println!("  step {s:5}: delta L^r {:+.1} points", 100.0 * d);
    }
    Ok(())
}
