//! Repeat loss change on a hand-scored vignette.
//!
//! Builds token scores for one vignette by hand (splitting one noun into two
//! sub-tokens), then aligns them to the noun spans and computes L^r under both
//! sub-token modes.

use reprobe::metrics::{align_noun_losses, repeat_loss_change, SubtokenMode};
use reprobe::provider::{ScoredText, TokenScore};
use reprobe::stimulus::{render_text, Condition};

fn main() -> reprobe::Result<()> {
    let nouns: Vec<String> = ["patience", "notion", "movie"].map(String::from).to_vec();
    let v = render_text("demo", Condition::Repeat, &nouns, &nouns);
    println!("{}\n", v.text);

    // Cut points: every word boundary, plus " pati|ence" in the first list.
    let mut cuts: Vec<usize> = v.text.match_indices(' ').map(|(i, _)| i).collect();
    cuts.extend(v.text.match_indices([',', '.', ':']).map(|(i, _)| i));
    cuts.push(v.first_list[0].s + 4);
    cuts.retain(|&c| c > 0);
    cuts.sort_unstable();
    cuts.dedup();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(v.text.len());

    let in_second = |start: usize| start >= v.second_list[0].s;
    let tokens = bounds
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let piece = &v.text[w[0]..w[1]];
            // Nouns are surprising on first sight and cheap when repeated.
            let is_noun = nouns.iter().any(|n| n.contains(piece.trim()) && piece.trim().len() > 2);
            let bits = match (is_noun, in_second(w[0])) {
                (true, false) => 9.0,
                (true, true) => 2.0,
                _ => 3.0,
            };
            TokenScore {
                token_id: i as u32,
                token_text: piece.to_string(),
                start: w[0],
                end: w[1],
                logprob: (i > 0).then(|| -bits * std::f64::consts::LN_2),
            }
        })
        .collect();
    let scored = ScoredText {
        text: v.text.clone(),
        model_id: "hand".into(),
        revision: "-".into(),
        tokens,
    };
    scored.validate("demo")?;

    for mode in [SubtokenMode::Sum, SubtokenMode::Mean] {
        let a = align_noun_losses(&v, &scored, mode)?;
        println!("{mode:?}");
        for l in &a.losses {
            println!(
                "  position {} {:>9}: first {:5.2} bits over {} token(s), repeat {:5.2} bits",
                l.position, l.noun, l.first_bits, l.first_tokens, l.repeat_bits
            );
        }
        let s = repeat_loss_change(&v.id, &a)?;
        let pos: Vec<String> = s.lr_per_position.iter().map(|x| format!("{:.1}%", 100.0 * x)).collect();
        println!("  L^r = {:.1}%  per position {}  gap {} tokens\n", 100.0 * s.lr.unwrap(), pos.join(" "), s.repeat_token_gap);
    }
    Ok(())
}
