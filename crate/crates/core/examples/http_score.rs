//! Scores vignettes against a running scoring server.
//!
//! ```text
//! REPROBE_PROVIDER_URL=http://localhost:8000 \
//!   cargo run --example http_score -- EleutherAI/pythia-70m step143000 [n]
//! ```

use reprobe::metrics::{score_vignette, SubtokenMode};
use reprobe::provider::http::{HttpProvider, ProviderEndpoint};
use reprobe::provider::score_all;
use reprobe::stats::trimmed_mean;
use reprobe::stimulus::Condition;
use reprobe::sweep::{build_stimuli, StimulusOptions};

fn main() -> reprobe::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = args.first().map_or("EleutherAI/pythia-70m", String::as_str);
    let revision = args.get(1).map_or("step143000", String::as_str);
    let n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);

    let provider = HttpProvider::new(ProviderEndpoint::from_env(model, revision)?)?;
    for condition in [Condition::Repeat, Condition::Control] {
        let set = build_stimuli(&StimulusOptions::default(), condition)?;
        let items: Vec<(String, String)> =
            set.vignettes.iter().take(n).map(|v| (v.id.clone(), v.text.clone())).collect();
        let mut lr = Vec::new();
        for (v, scored) in set.vignettes.iter().zip(score_all(&provider, &items, 4)) {
            let s = score_vignette(v, &scored?, SubtokenMode::Sum)?;
            lr.extend(s.lr);
        }
        println!("{model} {revision} {condition}: L^r {:.1}% over {} vignettes", 100.0 * trimmed_mean(&lr, 0.2)?, lr.len());
    }
    Ok(())
}
