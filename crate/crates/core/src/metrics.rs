//! Repeat loss change.
//!
//! Each noun's loss (bits) at its first occurrence is compared with the loss
//! of the noun in the same list position of the second list. The per-position
//! ratio `repeat / first` is averaged over the list and reported as
//! `L^r = 1 - mean ratio`: 0 means no retrieval, 1 means perfect retrieval.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provider::ScoredText;
use crate::stimulus::{NounSpan, Vignette};

/// First-occurrence losses below this many bits make a vignette degenerate.
pub const DEGENERATE_BITS: f64 = 1e-9;

/// How the bits of a noun split over several tokens are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubtokenMode {
    /// Joint log-probability of the noun.
    #[default]
    Sum,
    Mean,
}

impl std::str::FromStr for SubtokenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(SubtokenMode::Sum),
            "mean" => Ok(SubtokenMode::Mean),
            other => Err(Error::Invalid(format!("unknown subtoken mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NounLoss {
    /// Noun in the first list.
    pub noun: String,
    /// Noun in the second list (the same word in the repeat condition).
    pub second_noun: String,
    /// 1-based ordinal position in the list.
    pub position: usize,
    pub first_bits: f64,
    pub repeat_bits: f64,
    pub first_tokens: usize,
    pub repeat_tokens: usize,
}

/// Noun losses of one vignette plus the token distance between the lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub losses: Vec<NounLoss>,
    pub repeat_token_gap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScore {
    #[serde(rename = "id")]
    pub vignette_id: String,
    /// Fraction, `None` when degenerate.
    pub lr: Option<f64>,
    #[serde(rename = "lr_pos")]
    pub lr_per_position: Vec<f64>,
    #[serde(rename = "gap")]
    pub repeat_token_gap: usize,
    pub degenerate: bool,
}

/// Bits of the noun at `span` and the index of its first token.
fn noun_bits(
    vignette: &str,
    span: &NounSpan,
    scored: &ScoredText,
    mode: SubtokenMode,
) -> Result<(f64, usize, usize)> {
    let err = |m: String| Error::Alignment {
        vignette: vignette.to_string(),
        message: m,
    };
    let mut total = 0.0;
    let mut count = 0;
    let mut first_index = None;
    for (i, t) in scored.tokens.iter().enumerate() {
        if t.start >= span.e {
            break;
        }
        if t.end <= span.s {
            continue;
        }
        let Some(bits) = scored.token_bits(i) else {
            return Err(err(format!(
                "noun {:?} overlaps the first token, which has no probability",
                span.w
            )));
        };
        total += bits;
        count += 1;
        first_index.get_or_insert(i);
    }
    let Some(idx) = first_index else {
        return Err(err(format!("no token overlaps noun {:?}", span.w)));
    };
    let bits = match mode {
        SubtokenMode::Sum => total,
        SubtokenMode::Mean => total / count as f64,
    };
    Ok((bits, count, idx))
}

/// Pairs each first-list noun with the second-list noun at the same position
/// and sums (or averages) the bits of every token overlapping each span.
pub fn align_noun_losses(
    vignette: &Vignette,
    scored: &ScoredText,
    mode: SubtokenMode,
) -> Result<Alignment> {
    if scored.text != vignette.text {
        return Err(Error::Alignment {
            vignette: vignette.id.clone(),
            message: "scored text differs from vignette text".into(),
        });
    }
    let mut losses = Vec::with_capacity(vignette.list_len);
    let mut gap = 0;
    for (p, (a, b)) in vignette
        .first_list
        .iter()
        .zip(&vignette.second_list)
        .enumerate()
    {
        let (first_bits, first_tokens, fi) = noun_bits(&vignette.id, a, scored, mode)?;
        let (repeat_bits, repeat_tokens, ri) = noun_bits(&vignette.id, b, scored, mode)?;
        if p == 0 {
            gap = ri - fi;
        }
        losses.push(NounLoss {
            noun: a.w.clone(),
            second_noun: b.w.clone(),
            position: p + 1,
            first_bits,
            repeat_bits,
            first_tokens,
            repeat_tokens,
        });
    }
    Ok(Alignment {
        losses,
        repeat_token_gap: gap,
    })
}

/// Ratio-then-average repeat loss change. A vignette whose first-occurrence
/// loss is below [`DEGENERATE_BITS`] at any position is flagged degenerate.
pub fn repeat_loss_change(vignette_id: &str, alignment: &Alignment) -> Result<RetrievalScore> {
    let losses = &alignment.losses;
    let k = losses.len();
    if k == 0 {
        return Err(Error::Invalid(format!("{vignette_id}: no noun losses")));
    }
    let mut by_pos: Vec<Option<&NounLoss>> = vec![None; k];
    for l in losses {
        if l.position == 0 || l.position > k || by_pos[l.position - 1].is_some() {
            return Err(Error::Invalid(format!(
                "{vignette_id}: positions must be 1..={k}, each exactly once"
            )));
        }
        by_pos[l.position - 1] = Some(l);
    }
    let ordered: Vec<&NounLoss> = by_pos.into_iter().map(|l| l.expect("filled")).collect();
    if ordered.iter().any(|l| !(l.first_bits >= DEGENERATE_BITS)) {
        return Ok(RetrievalScore {
            vignette_id: vignette_id.to_string(),
            lr: None,
            lr_per_position: Vec::new(),
            repeat_token_gap: alignment.repeat_token_gap,
            degenerate: true,
        });
    }
    let ratios: Vec<f64> = ordered.iter().map(|l| l.repeat_bits / l.first_bits).collect();
    let mean_ratio = ratios.iter().sum::<f64>() / k as f64;
    Ok(RetrievalScore {
        vignette_id: vignette_id.to_string(),
        lr: Some(1.0 - mean_ratio),
        lr_per_position: ratios.iter().map(|r| 1.0 - r).collect(),
        repeat_token_gap: alignment.repeat_token_gap,
        degenerate: false,
    })
}

/// Aligns and scores one vignette.
pub fn score_vignette(
    vignette: &Vignette,
    scored: &ScoredText,
    mode: SubtokenMode,
) -> Result<RetrievalScore> {
    let alignment = align_noun_losses(vignette, scored, mode)?;
    repeat_loss_change(&vignette.id, &alignment)
}

pub fn write_scores_jsonl(scores: &[RetrievalScore], mut out: impl Write) -> Result<()> {
    for s in scores {
        serde_json::to_writer(&mut out, s)?;
        writeln!(out).map_err(|e| Error::io("<scores>", e))?;
    }
    Ok(())
}

pub fn read_scores_jsonl(input: impl std::io::BufRead) -> Result<Vec<RetrievalScore>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<scores>", e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::TokenScore;
    use crate::stimulus::{render_text, Condition};
    use proptest::prelude::*;

    fn losses(first: &[f64], repeat: &[f64]) -> Alignment {
        Alignment {
            losses: first
                .iter()
                .zip(repeat)
                .enumerate()
                .map(|(i, (&f, &r))| NounLoss {
                    noun: format!("n{i}"),
                    second_noun: format!("n{i}"),
                    position: i + 1,
                    first_bits: f,
                    repeat_bits: r,
                    first_tokens: 1,
                    repeat_tokens: 1,
                })
                .collect(),
            repeat_token_gap: 0,
        }
    }

    #[test]
    fn hand_example() {
        let s = repeat_loss_change("v", &losses(&[2.0, 4.0, 6.0], &[1.0, 1.0, 1.5])).unwrap();
        assert!((s.lr.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.lr_per_position, vec![0.5, 0.75, 0.75]);
    }

    #[test]
    fn bounds() {
        let none = repeat_loss_change("v", &losses(&[3.0, 2.0], &[3.0, 2.0])).unwrap();
        assert_eq!(none.lr, Some(0.0));
        let perfect = repeat_loss_change("v", &losses(&[3.0, 2.0], &[0.0, 0.0])).unwrap();
        assert_eq!(perfect.lr, Some(1.0));
    }

    #[test]
    fn degenerate_first_loss_is_flagged() {
        let s = repeat_loss_change("v", &losses(&[1e-12, 2.0], &[0.0, 1.0])).unwrap();
        assert!(s.degenerate);
        assert!(s.lr.is_none());
    }

    #[test]
    fn positions_must_be_complete() {
        let mut a = losses(&[1.0, 2.0], &[1.0, 1.0]);
        a.losses[1].position = 1;
        assert!(repeat_loss_change("v", &a).is_err());
    }

    fn vignette() -> Vignette {
        let nouns: Vec<String> = ["patience", "notion", "movie"].iter().map(|s| s.to_string()).collect();
        render_text("v", Condition::Repeat, &nouns, &nouns)
    }

    /// One token per byte run between the given cut points, each with `bits`.
    fn scored_with(text: &str, cuts: &[usize], bits: impl Fn(usize) -> f64) -> ScoredText {
        let mut bounds = vec![0];
        bounds.extend_from_slice(cuts);
        bounds.push(text.len());
        ScoredText {
            text: text.into(),
            model_id: "m".into(),
            revision: "r".into(),
            tokens: bounds
                .windows(2)
                .enumerate()
                .map(|(i, w)| TokenScore {
                    token_id: i as u32,
                    token_text: text[w[0]..w[1]].into(),
                    start: w[0],
                    end: w[1],
                    logprob: (i > 0).then(|| -bits(i) * std::f64::consts::LN_2),
                })
                .collect(),
        }
    }

    #[test]
    fn sums_subtokens() {
        let v = vignette();
        let n = &v.first_list[0];
        // " patience" split as " pati" + "ence"
        let cuts = [n.s - 1, n.s + 4, n.e];
        let s = scored_with(&v.text, &cuts, |i| if i == 1 { 1.5 } else { 0.5 });
        let a = align_noun_losses(&v, &s, SubtokenMode::Sum).unwrap();
        assert!((a.losses[0].first_bits - 2.0).abs() < 1e-12);
        assert_eq!(a.losses[0].first_tokens, 2);
        let m = align_noun_losses(&v, &s, SubtokenMode::Mean).unwrap();
        assert!((m.losses[0].first_bits - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_errors() {
        let v = vignette();
        // first token covers the first noun
        let s = scored_with(&v.text, &[v.first_list[0].e + 1], |_| 1.0);
        assert!(align_noun_losses(&v, &s, SubtokenMode::Sum).is_err());
        let mut other = scored_with(&v.text, &[5], |_| 1.0);
        other.text.push('!');
        assert!(align_noun_losses(&v, &other, SubtokenMode::Sum).is_err());
    }

    #[test]
    fn jsonl_record_shape() {
        let s = repeat_loss_change("arb-0001", &losses(&[2.0], &[1.0])).unwrap();
        let line = serde_json::to_string(&s).unwrap();
        assert_eq!(line, r#"{"id":"arb-0001","lr":0.5,"lr_pos":[0.5],"gap":0,"degenerate":false}"#);
    }

    proptest! {
        #[test]
        fn scale_invariant_and_bounded(
            pairs in proptest::collection::vec((0.01f64..20.0, 0.0f64..20.0), 1..6),
            c in 0.001f64..1000.0,
        ) {
            let first: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let rep: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let a = repeat_loss_change("v", &losses(&first, &rep)).unwrap();
            let f2: Vec<f64> = first.iter().map(|x| x * c).collect();
            let r2: Vec<f64> = rep.iter().map(|x| x * c).collect();
            let b = repeat_loss_change("v", &losses(&f2, &r2)).unwrap();
            let (la, lb) = (a.lr.unwrap(), b.lr.unwrap());
            prop_assert!((la - lb).abs() < 1e-9 * (1.0 + la.abs()));
            prop_assert!(la <= 1.0);
            let mean_pos = a.lr_per_position.iter().sum::<f64>() / a.lr_per_position.len() as f64;
            prop_assert!((mean_pos - la).abs() < 1e-12);
        }

        #[test]
        fn permuting_positions_keeps_lr(
            pairs in proptest::collection::vec((0.01f64..20.0, 0.0f64..20.0), 2..6),
            rot in 0usize..5,
        ) {
            let mut a = losses(
                &pairs.iter().map(|p| p.0).collect::<Vec<_>>(),
                &pairs.iter().map(|p| p.1).collect::<Vec<_>>(),
            );
            let base = repeat_loss_change("v", &a).unwrap().lr.unwrap();
            let k = a.losses.len();
            for l in &mut a.losses {
                l.position = (l.position - 1 + rot) % k + 1;
            }
            a.losses.rotate_left(rot % k);
            let permuted = repeat_loss_change("v", &a).unwrap().lr.unwrap();
            prop_assert!((base - permuted).abs() < 1e-12);
        }
    }
}
