//! Vignette stimuli: a fixed narrative frame holding an original noun list
//! and, later, either the same list again (repeat) or fresh nouns (control).

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wordpool::{ConcretenessExtremes, NounPool};

const FRAME_OPEN: &str = "Mary read a list of words: ";
const FRAME_MIDDLE: &str =
    ". After the meeting, she took a break and had a cup of coffee. When she got back, she read the list again: ";
const FRAME_CLOSE: &str = ".";
const SEPARATOR: &str = ", ";

pub const MAX_LIST_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Repeat,
    Control,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Repeat => "repeat",
            Condition::Control => "control",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "repeat" => Ok(Condition::Repeat),
            "control" => Ok(Condition::Control),
            other => Err(Error::Invalid(format!("unknown condition {other:?}"))),
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A noun and its byte span `[s, e)` in the vignette text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounSpan {
    pub w: String,
    pub s: usize,
    pub e: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vignette {
    pub id: String,
    pub condition: Condition,
    pub list_len: usize,
    pub text: String,
    #[serde(rename = "first")]
    pub first_list: Vec<NounSpan>,
    #[serde(rename = "second")]
    pub second_list: Vec<NounSpan>,
}

impl Vignette {
    /// Checks spans against the text and the condition's noun rule.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Stimulus(format!("{}: {m}", self.id));
        if self.first_list.len() != self.list_len || self.second_list.len() != self.list_len {
            return Err(bad("list lengths disagree with list_len".into()));
        }
        let mut prev_end = 0;
        for span in self.first_list.iter().chain(&self.second_list) {
            if span.s < prev_end || span.e <= span.s {
                return Err(bad("spans overlap or are out of order".into()));
            }
            if self.text.get(span.s..span.e) != Some(span.w.as_str()) {
                return Err(bad(format!("span [{}, {}) does not slice {:?}", span.s, span.e, span.w)));
            }
            prev_end = span.e;
        }
        let first: Vec<&str> = self.first_list.iter().map(|n| n.w.as_str()).collect();
        let second: Vec<&str> = self.second_list.iter().map(|n| n.w.as_str()).collect();
        match self.condition {
            Condition::Repeat if first != second => Err(bad("repeat lists differ".into())),
            Condition::Control if first.iter().any(|w| second.contains(w)) => {
                Err(bad("control lists share a noun".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn first_nouns(&self) -> Vec<&str> {
        self.first_list.iter().map(|n| n.w.as_str()).collect()
    }

    pub fn second_nouns(&self) -> Vec<&str> {
        self.second_list.iter().map(|n| n.w.as_str()).collect()
    }
}

fn push_list(text: &mut String, nouns: &[String]) -> Vec<NounSpan> {
    let mut spans = Vec::with_capacity(nouns.len());
    for (i, w) in nouns.iter().enumerate() {
        if i > 0 {
            text.push_str(SEPARATOR);
        }
        let s = text.len();
        text.push_str(w);
        spans.push(NounSpan {
            w: w.clone(),
            s,
            e: text.len(),
        });
    }
    spans
}

/// Renders the frame around `first` and `second` and records every span.
pub fn render_text(id: &str, condition: Condition, first: &[String], second: &[String]) -> Vignette {
    let mut text = String::from(FRAME_OPEN);
    let first_list = push_list(&mut text, first);
    text.push_str(FRAME_MIDDLE);
    let second_list = push_list(&mut text, second);
    text.push_str(FRAME_CLOSE);
    Vignette {
        id: id.to_string(),
        condition,
        list_len: first.len(),
        text,
        first_list,
        second_list,
    }
}

fn render_with_rng(
    id: &str,
    nouns: &[String],
    condition: Condition,
    pool: &[String],
    rng: &mut impl Rng,
) -> Result<Vignette> {
    if nouns.is_empty() || nouns.len() > MAX_LIST_LEN {
        return Err(Error::Stimulus(format!(
            "list length {} outside 1..={MAX_LIST_LEN}",
            nouns.len()
        )));
    }
    if let Some(missing) = nouns.iter().find(|n| !pool.contains(n)) {
        return Err(Error::Stimulus(format!("noun {missing:?} is not in the pool")));
    }
    let second = match condition {
        Condition::Repeat => nouns.to_vec(),
        Condition::Control => {
            let used: HashSet<&String> = nouns.iter().collect();
            let candidates: Vec<&String> = pool.iter().filter(|w| !used.contains(w)).collect();
            if candidates.len() < nouns.len() {
                return Err(Error::Stimulus(format!(
                    "pool has {} nouns outside the list, need {}",
                    candidates.len(),
                    nouns.len()
                )));
            }
            candidates
                .choose_multiple(rng, nouns.len())
                .map(|w| (*w).clone())
                .collect()
        }
    };
    Ok(render_text(id, condition, nouns, &second))
}

/// Renders one vignette. In the control condition the second list is drawn
/// uniformly without replacement from the pool minus `nouns`.
pub fn render_vignette(
    nouns: &[String],
    condition: Condition,
    pool: &NounPool,
    seed: u64,
) -> Result<Vignette> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    render_with_rng("v", nouns, condition, pool.nouns(), &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusProvenance {
    pub pool_sha256: String,
    pub seed: u64,
    pub generator: String,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSet {
    pub vignettes: Vec<Vignette>,
    pub provenance: Option<StimulusProvenance>,
}

impl StimulusSet {
    pub fn new(vignettes: Vec<Vignette>, provenance: Option<StimulusProvenance>) -> Result<Self> {
        let mut ids = HashSet::new();
        for v in &vignettes {
            if !ids.insert(v.id.as_str()) {
                return Err(Error::Stimulus(format!("duplicate vignette id {}", v.id)));
            }
            v.validate()?;
        }
        if let Some(first) = vignettes.first() {
            if vignettes
                .iter()
                .any(|v| v.list_len != first.list_len || v.condition != first.condition)
            {
                return Err(Error::Stimulus(
                    "vignettes differ in list length or condition".into(),
                ));
            }
        }
        Ok(Self {
            vignettes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.vignettes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vignettes.is_empty()
    }

    pub fn condition(&self) -> Option<Condition> {
        self.vignettes.first().map(|v| v.condition)
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for v in &self.vignettes {
            serde_json::to_writer(&mut out, v)?;
            writeln!(out).map_err(|e| Error::io("<stimuli>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        let mut vignettes = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| Error::io("<stimuli>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            vignettes.push(serde_json::from_str(&line)?);
        }
        Self::new(vignettes, None)
    }

    /// Writes `<path>` (JSON Lines) and `<path>.provenance.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        crate::fsio::write_atomic(path, &buf)?;
        if let Some(p) = &self.provenance {
            let side = provenance_path(path);
            crate::fsio::write_atomic(&side, &serde_json::to_vec_pretty(p)?)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut set = Self::read_jsonl(std::io::BufReader::new(f))?;
        let side = provenance_path(path);
        if side.exists() {
            let raw = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
            set.provenance = Some(serde_json::from_slice(&raw)?);
        }
        Ok(set)
    }
}

fn provenance_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".provenance.json");
    s.into()
}

/// Parameters of the arbitrary-noun set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbitrarySetParams {
    pub n_lists: usize,
    pub base_len: usize,
    pub cap: usize,
}

impl Default for ArbitrarySetParams {
    fn default() -> Self {
        Self {
            n_lists: 23,
            base_len: 10,
            cap: 3,
        }
    }
}

fn rotations(list: &[String], cap: usize) -> impl Iterator<Item = Vec<String>> + '_ {
    let n = list.len();
    (0..n).map(move |r| (0..cap.min(n)).map(|i| list[(r + i) % n].clone()).collect())
}

fn vignette_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Partitions the first `n_lists * base_len` pool nouns, in order, into lists
/// of `base_len`; every cyclic rotation of each list, truncated to `cap`
/// nouns, becomes one vignette.
pub fn generate_arbitrary_set(
    pool: &NounPool,
    params: ArbitrarySetParams,
    condition: Condition,
    seed: u64,
) -> Result<StimulusSet> {
    let ArbitrarySetParams {
        n_lists,
        base_len,
        cap,
    } = params;
    if n_lists == 0 || base_len == 0 || cap == 0 || cap > base_len {
        return Err(Error::Stimulus(format!("bad set parameters {params:?}")));
    }
    let needed = n_lists * base_len;
    if pool.len() < needed {
        return Err(Error::Stimulus(format!(
            "pool has {} nouns, need {needed}",
            pool.len()
        )));
    }
    let mut vignettes = Vec::with_capacity(needed);
    for (l, list) in pool.nouns()[..needed].chunks(base_len).enumerate() {
        for (r, nouns) in rotations(list, cap).enumerate() {
            let index = l * base_len + r;
            let id = format!("arb-{index:04}");
            let mut rng = vignette_rng(seed, index);
            vignettes.push(render_with_rng(&id, &nouns, condition, pool.nouns(), &mut rng)?);
        }
    }
    let provenance = StimulusProvenance {
        pool_sha256: pool.content_hash(),
        seed,
        generator: "arbitrary".into(),
        params: serde_json::to_value(params)?,
    };
    StimulusSet::new(vignettes, Some(provenance))
}

/// Builds one set per concreteness category. Words, in extremity order, are
/// cut into lists of `cap` (leftovers, the least extreme, are dropped) and
/// every rotation of each list is rendered. Categories must hold 500 words
/// unless `allow_any_size` is set.
pub fn generate_concreteness_sets(
    extremes: &ConcretenessExtremes,
    cap: usize,
    condition: Condition,
    seed: u64,
    allow_any_size: bool,
) -> Result<(StimulusSet, StimulusSet)> {
    let build = |words: Vec<String>, prefix: &str, stream: u64| -> Result<StimulusSet> {
        if !allow_any_size && words.len() != 500 {
            return Err(Error::Stimulus(format!(
                "{prefix} category has {} words, expected 500",
                words.len()
            )));
        }
        if cap == 0 || cap > MAX_LIST_LEN {
            return Err(Error::Stimulus(format!("bad list length {cap}")));
        }
        let n_lists = words.len() / cap;
        if n_lists == 0 {
            return Err(Error::Stimulus(format!("{prefix} category is too small")));
        }
        let mut vignettes = Vec::with_capacity(n_lists * cap);
        for (l, list) in words[..n_lists * cap].chunks(cap).enumerate() {
            for (r, nouns) in rotations(list, cap).enumerate() {
                let index = l * cap + r;
                let id = format!("{prefix}-{index:04}");
                let mut rng = vignette_rng(seed ^ stream, index);
                vignettes.push(render_with_rng(&id, &nouns, condition, &words, &mut rng)?);
            }
        }
        let pool_text = words.join("\n");
        let provenance = StimulusProvenance {
            pool_sha256: crate::wordpool::sha256_hex(pool_text.as_bytes()),
            seed,
            generator: format!("concreteness-{prefix}"),
            params: serde_json::json!({ "cap": cap, "n_lists": n_lists }),
        };
        StimulusSet::new(vignettes, Some(provenance))
    };
    Ok((
        build(extremes.concrete_words(), "conc", 0)?,
        build(extremes.abstract_words(), "abst", 0x5eed)?,
    ))
}
