//! Trains the toy model and prints the copying diagnostics at every checkpoint:
//! held-out bits on copied versus other tokens, and L^r per condition and
//! list position on the vignette sets.
//!
//! ```text
//! cargo run --release --example toy_transition -- [run-config.json]
//! ```

use std::time::Instant;

use reprobe::metrics::{score_vignette, SubtokenMode};
use reprobe::provider::LogprobProvider;
use reprobe::stats::trimmed_mean;
use reprobe::stimulus::{generate_arbitrary_set, ArbitrarySetParams, Condition};
use reprobe::toylm::{loss_bits, toy_provider, SynthCorpus, ToyRunConfig, ToyVocab, Trainer};
use reprobe::wordpool::NounPool;

fn main() -> reprobe::Result<()> {
    let run = match std::env::args().nth(1) {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| reprobe::Error::Invalid(format!("{path}: {e}")))?;
            serde_json::from_str(&text)?
        }
        None => ToyRunConfig::default(),
    };
    run.validate()?;

    let nouns = ToyVocab::builtin(run.model.vocab_size)?.nouns();
    let pool = NounPool::from_lines("toy", nouns.iter().map(String::as_str))?;
    let repeat = generate_arbitrary_set(&pool, ArbitrarySetParams::default(), Condition::Repeat, 0)?;
    let control = generate_arbitrary_set(&pool, ArbitrarySetParams::default(), Condition::Control, 0)?;

    let t0 = Instant::now();
    let mut trainer = Trainer::new(&run.model, &run.corpus, &run.train)?;
    trainer.run(|ck| {
        let mut held = SynthCorpus::with_stream(&run.corpus, 7)?;
        let (mut copied, mut other) = (Vec::new(), Vec::new());
        for _ in 0..16 {
            let seq = held.next_sequence();
            let (_, bits) = loss_bits(&ck.params, &seq.tokens)?;
            for (i, b) in bits.into_iter().enumerate() {
                // bits[i] scores token i + 1; the first copied token is not predictable.
                let t = i + 1;
                match seq.repeat {
                    Some(r) if t > r.dst && t < r.dst + r.len => copied.push(b),
                    _ => other.push(b),
                }
            }
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        print!(
            "step {:6}  bits copied {:5.2} other {:5.2}",
            ck.step,
            avg(&copied),
            avg(&other)
        );

        let provider = toy_provider(ck.clone());
        for set in [&repeat, &control] {
            let mut lr = Vec::new();
            let mut pos = vec![Vec::new(); 3];
            for v in &set.vignettes {
                let s = score_vignette(v, &provider.score_text(&v.text)?, SubtokenMode::Sum)?;
                lr.extend(s.lr);
                for (p, x) in pos.iter_mut().zip(&s.lr_per_position) {
                    p.push(*x);
                }
            }
            print!(
                "  {} {:5.1}% ({:.1} {:.1} {:.1})",
                set.condition().map_or("?", Condition::as_str),
                100.0 * trimmed_mean(&lr, 0.2)?,
                100.0 * trimmed_mean(&pos[0], 0.2)?,
                100.0 * trimmed_mean(&pos[1], 0.2)?,
                100.0 * trimmed_mean(&pos[2], 0.2)?
            );
        }
        println!("  {:.0}s", t0.elapsed().as_secs_f64());
        Ok(())
    })?;
    Ok(())
}
