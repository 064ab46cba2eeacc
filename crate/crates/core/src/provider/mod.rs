//! Per-token log-probability scoring.
//!
//! A provider turns a text into a [`ScoredText`]: the tokens the model saw,
//! their byte spans and the natural-log probability of each token given
//! everything before it. Anything that speaks the `/v1/score` protocol (see
//! [`http`]) or the in-process toy model can act as a provider.

pub mod http;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use http::{HttpProvider, ProviderEndpoint};

/// One scored token. `logprob` is `None` for the first token, which has no
/// conditional probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    #[serde(rename = "id")]
    pub token_id: u32,
    #[serde(rename = "text")]
    pub token_text: String,
    pub start: usize,
    pub end: usize,
    pub logprob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredText {
    pub text: String,
    pub model_id: String,
    pub revision: String,
    pub tokens: Vec<TokenScore>,
}

impl ScoredText {
    /// Checks the protocol invariants: spans tile `[0, len(text))` in order,
    /// only the first token lacks a log-probability, and every present
    /// log-probability is `<= 0`. `context` names the request in errors.
    pub fn validate(&self, context: &str) -> Result<()> {
        let violation = |token_index: usize, message: String| Error::Protocol {
            context: context.to_string(),
            token_index,
            message,
        };
        if self.tokens.is_empty() {
            return Err(violation(0, "no tokens".into()));
        }
        let mut cursor = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.start != cursor {
                return Err(violation(
                    i,
                    format!("span starts at {} but previous ended at {cursor}", t.start),
                ));
            }
            if t.end <= t.start {
                return Err(violation(i, format!("empty span [{}, {})", t.start, t.end)));
            }
            if t.end > self.text.len() {
                return Err(violation(
                    i,
                    format!("span end {} beyond text length {}", t.end, self.text.len()),
                ));
            }
            if !self.text.is_char_boundary(t.end) {
                return Err(violation(i, "span end splits a UTF-8 character".into()));
            }
            cursor = t.end;
            match (i, t.logprob) {
                (0, Some(_)) => {
                    return Err(violation(0, "first token must have a null logprob".into()))
                }
                (0, None) => {}
                (_, None) => return Err(violation(i, "missing logprob".into())),
                (_, Some(lp)) if !(lp <= 0.0) => {
                    return Err(violation(i, format!("logprob {lp} is not <= 0")))
                }
                _ => {}
            }
        }
        if cursor != self.text.len() {
            return Err(violation(
                self.tokens.len() - 1,
                format!("spans end at {cursor}, text has {} bytes", self.text.len()),
            ));
        }
        Ok(())
    }

    /// Loss of token `i` in bits, `None` for the first token.
    pub fn token_bits(&self, i: usize) -> Option<f64> {
        self.tokens[i].logprob.map(|lp| -lp / std::f64::consts::LN_2)
    }
}

/// Anything that can score a text.
pub trait LogprobProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn revision(&self) -> &str;
    fn score_text(&self, text: &str) -> Result<ScoredText>;

    /// Like [`score_text`](Self::score_text), with protocol errors naming `label`.
    fn score_labeled(&self, label: &str, text: &str) -> Result<ScoredText> {
        self.score_text(text).map_err(|e| match e {
            Error::Protocol {
                token_index,
                message,
                ..
            } => Error::Protocol {
                context: label.to_string(),
                token_index,
                message,
            },
            other => other,
        })
    }
}

/// Scores `(label, text)` items with at most `max_inflight` concurrent
/// requests. Results come back in input order regardless of completion order.
pub fn score_all<P: LogprobProvider + ?Sized>(
    provider: &P,
    items: &[(String, String)],
    max_inflight: usize,
) -> Vec<Result<ScoredText>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let workers = max_inflight.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ScoredText>>>> =
        Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((label, text)) = items.get(i) else {
                    break;
                };
                let r = provider.score_labeled(label, text);
                slots.lock().expect("poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("poisoned")
        .into_iter()
        .map(|r| r.expect("every item scored"))
        .collect()
}

/// Converts a natural-log probability into a loss in bits.
pub fn bits(logprob_e: f64) -> Result<f64> {
    if !(logprob_e <= 0.0) {
        return Err(Error::Invalid(format!("log-probability {logprob_e} is positive or NaN")));
    }
    Ok(-logprob_e / std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok(start: usize, end: usize, logprob: Option<f64>) -> TokenScore {
        TokenScore {
            token_id: 0,
            token_text: String::new(),
            start,
            end,
            logprob,
        }
    }

    fn scored(text: &str, tokens: Vec<TokenScore>) -> ScoredText {
        ScoredText {
            text: text.into(),
            model_id: "m".into(),
            revision: "r".into(),
            tokens,
        }
    }

    #[test]
    fn bits_examples() {
        assert!((bits(-std::f64::consts::LN_2).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(bits(0.0).unwrap(), 0.0);
        assert!((bits(-std::f64::consts::LN_10).unwrap() - 3.321928094887362).abs() < 1e-12);
        assert!(bits(0.1).is_err());
        assert!(bits(f64::NAN).is_err());
    }

    #[test]
    fn single_token_is_valid() {
        scored("hello", vec![tok(0, 5, None)]).validate("t").unwrap();
    }

    #[test]
    fn tiling_rule() {
        let ok = scored("ab cdef", vec![tok(0, 3, None), tok(3, 7, Some(-1.0))]);
        ok.validate("t").unwrap();
        let gap = scored("ab cdef", vec![tok(0, 3, None), tok(4, 7, Some(-1.0))]);
        match gap.validate("v1").unwrap_err() {
            Error::Protocol { token_index, context, .. } => {
                assert_eq!(token_index, 1);
                assert_eq!(context, "v1");
            }
            e => panic!("{e}"),
        }
        let short = scored("ab cdef", vec![tok(0, 3, None), tok(3, 6, Some(-1.0))]);
        assert!(short.validate("t").is_err());
        let overlap = scored("ab cdef", vec![tok(0, 3, None), tok(2, 7, Some(-1.0))]);
        assert!(overlap.validate("t").is_err());
    }

    #[test]
    fn logprob_rules() {
        let first = scored("ab", vec![tok(0, 1, Some(0.0)), tok(1, 2, Some(-1.0))]);
        assert!(first.validate("t").is_err());
        let missing = scored("ab", vec![tok(0, 1, None), tok(1, 2, None)]);
        assert!(missing.validate("t").is_err());
        let positive = scored("ab", vec![tok(0, 1, None), tok(1, 2, Some(0.5))]);
        assert!(positive.validate("t").is_err());
    }

    proptest! {
        #[test]
        fn bits_is_additive(a in -50.0f64..=0.0, b in -50.0f64..=0.0) {
            let sum = bits(a).unwrap() + bits(b).unwrap();
            prop_assert!((sum - bits(a + b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn bits_decreasing_in_probability(a in -50.0f64..=0.0, b in -50.0f64..=0.0) {
            prop_assume!(a < b);
            prop_assert!(bits(a).unwrap() > bits(b).unwrap());
        }

        #[test]
        fn accepted_spans_reconstruct_text(cuts in proptest::collection::btree_set(1usize..40, 0..10)) {
            let text: String = "abcdefghijklmnopqrstuvwxyz0123456789ABCD".into();
            let mut bounds: Vec<usize> = vec![0];
            bounds.extend(cuts.iter().copied());
            bounds.push(text.len());
            let tokens: Vec<TokenScore> = bounds
                .windows(2)
                .enumerate()
                .map(|(i, w)| tok(w[0], w[1], if i == 0 { None } else { Some(-0.5) }))
                .collect();
            let s = scored(&text, tokens);
            s.validate("p").unwrap();
            let joined: String = s.tokens.iter().map(|t| &text[t.start..t.end]).collect();
            prop_assert_eq!(joined, text);
        }
    }
}
