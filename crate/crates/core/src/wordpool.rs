//! Noun pools and concreteness norms.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_WORD_COLUMN: &str = "Word";
pub const DEFAULT_RATING_COLUMN: &str = "Conc.M";

/// A duplicate dropped while loading a pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupeEvent {
    pub event: String,
    pub word: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolProvenance {
    pub source: Option<String>,
    /// SHA-256 of the raw input file, if loaded from disk.
    pub source_sha256: Option<String>,
    pub duplicates: Vec<DedupeEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NounPool {
    pub name: String,
    nouns: Vec<String>,
    pub provenance: PoolProvenance,
}

impl PartialEq for NounPool {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.nouns == other.nouns
    }
}

impl NounPool {
    /// Builds a pool from lines of text. Blank lines are skipped, words are
    /// lowercased and only the first occurrence of a word is kept.
    pub fn from_lines<'a>(name: &str, lines: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut nouns = Vec::new();
        let mut seen = HashSet::new();
        let mut duplicates = Vec::new();
        for (i, raw) in lines.into_iter().enumerate() {
            let word = raw.trim();
            if word.is_empty() {
                continue;
            }
            if word.chars().any(char::is_whitespace) {
                return Err(Error::WordPool(format!(
                    "line {}: {word:?} contains whitespace",
                    i + 1
                )));
            }
            let word = word.to_lowercase();
            if seen.insert(word.clone()) {
                nouns.push(word);
            } else {
                duplicates.push(DedupeEvent {
                    event: "dedupe".into(),
                    word,
                    line: i + 1,
                });
            }
        }
        if nouns.is_empty() {
            return Err(Error::WordPool(format!("pool {name:?} is empty")));
        }
        Ok(Self {
            name: name.to_string(),
            nouns,
            provenance: PoolProvenance {
                duplicates,
                ..Default::default()
            },
        })
    }

    pub fn nouns(&self) -> &[String] {
        &self.nouns
    }

    pub fn len(&self) -> usize {
        self.nouns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.nouns.iter().any(|n| n == word)
    }

    /// One word per line; loading this text yields an equal pool.
    pub fn to_text(&self) -> String {
        let mut s = self.nouns.join("\n");
        s.push('\n');
        s
    }

    /// SHA-256 over the serialized word list.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    /// Writes the dedupe events as JSON Lines.
    pub fn write_provenance_log(&self, mut out: impl Write) -> Result<()> {
        for ev in &self.provenance.duplicates {
            serde_json::to_writer(&mut out, ev)?;
            writeln!(out).map_err(|e| Error::io("<provenance log>", e))?;
        }
        Ok(())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads a one-word-per-line pool file.
pub fn load_noun_pool(path: &Path) -> Result<NounPool> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(raw.clone())
        .map_err(|_| Error::WordPool(format!("{} is not valid UTF-8", path.display())))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("pool")
        .to_string();
    let mut pool = NounPool::from_lines(&name, text.lines())?;
    for ev in &pool.provenance.duplicates {
        log::info!("{}: dropped duplicate {:?} on line {}", name, ev.word, ev.line);
    }
    pool.provenance.source = Some(path.display().to_string());
    pool.provenance.source_sha256 = Some(sha256_hex(&raw));
    Ok(pool)
}

/// Human concreteness ratings on a 1–5 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcretenessNorms {
    entries: BTreeMap<String, f64>,
    pub source_sha256: Option<String>,
}

impl ConcretenessNorms {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, (w, r)) in entries.into_iter().enumerate() {
            check_rating(r, i + 1)?;
            map.entry(w).or_insert(r);
        }
        Ok(Self {
            entries: map,
            source_sha256: None,
        })
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(w, &r)| (w.as_str(), r))
    }
}

fn check_rating(r: f64, row: usize) -> Result<()> {
    if !(1.0..=5.0).contains(&r) {
        return Err(Error::NormsRow {
            row,
            message: format!("rating {r} outside [1, 5]"),
        });
    }
    Ok(())
}

/// Loads a norms table with `Word` and `Conc.M` columns.
pub fn load_concreteness_norms(path: &Path) -> Result<ConcretenessNorms> {
    load_concreteness_norms_with(path, DEFAULT_WORD_COLUMN, DEFAULT_RATING_COLUMN)
}

/// Loads a norms table, tab- or comma-delimited (decided from the header
/// row). Row numbers in errors count the header as row 1.
pub fn load_concreteness_norms_with(
    path: &Path,
    word_column: &str,
    rating_column: &str,
) -> Result<ConcretenessNorms> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut norms = parse_norms(&raw, word_column, rating_column)?;
    norms.source_sha256 = Some(sha256_hex(&raw));
    Ok(norms)
}

pub fn parse_norms(raw: &[u8], word_column: &str, rating_column: &str) -> Result<ConcretenessNorms> {
    let header_line = raw.split(|&b| b == b'\n').next().unwrap_or_default();
    let delimiter = if header_line.contains(&b'\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(raw);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::NormsRow {
                row: 1,
                message: format!("missing required column {name:?}"),
            })
    };
    let wi = col(word_column)?;
    let ri = col(rating_column)?;
    let mut entries = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let word = rec.get(wi).unwrap_or_default().to_lowercase();
        let cell = rec.get(ri).unwrap_or_default();
        let rating: f64 = cell.parse().map_err(|_| Error::NormsRow {
            row,
            message: format!("non-numeric rating {cell:?}"),
        })?;
        check_rating(rating, row)?;
        if word.is_empty() {
            return Err(Error::NormsRow {
                row,
                message: "empty word".into(),
            });
        }
        if entries.insert(word.clone(), rating).is_some() {
            log::warn!("norms row {row}: repeated word {word:?}, keeping the last rating");
        }
    }
    Ok(ConcretenessNorms {
        entries,
        source_sha256: None,
    })
}

/// The most concrete and most abstract words, each in extremity order
/// (most extreme first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcretenessExtremes {
    pub concrete: Vec<(String, f64)>,
    #[serde(rename = "abstract")]
    pub abstract_: Vec<(String, f64)>,
}

impl ConcretenessExtremes {
    pub fn concrete_words(&self) -> Vec<String> {
        self.concrete.iter().map(|(w, _)| w.clone()).collect()
    }

    pub fn abstract_words(&self) -> Vec<String> {
        self.abstract_.iter().map(|(w, _)| w.clone()).collect()
    }
}

/// Top `n` by descending rating and top `n` by ascending rating; ties are
/// broken by the lexicographically smaller word.
pub fn select_extremes(norms: &ConcretenessNorms, n: usize) -> Result<ConcretenessExtremes> {
    if n == 0 || norms.len() < 2 * n {
        return Err(Error::WordPool(format!(
            "need at least {} norm entries for n = {n}, have {}",
            2 * n,
            norms.len()
        )));
    }
    let mut desc: Vec<(String, f64)> = norms.iter().map(|(w, r)| (w.to_string(), r)).collect();
    desc.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let concrete: Vec<(String, f64)> = desc[..n].to_vec();
    let taken: HashSet<&str> = concrete.iter().map(|(w, _)| w.as_str()).collect();
    let mut asc: Vec<(String, f64)> = desc
        .iter()
        .filter(|(w, _)| !taken.contains(w.as_str()))
        .cloned()
        .collect();
    asc.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let abstract_: Vec<(String, f64)> = asc[..n].to_vec();
    let min_conc = concrete.last().map(|c| c.1).unwrap_or(f64::NAN);
    let max_abs = abstract_.last().map(|c| c.1).unwrap_or(f64::NAN);
    if min_conc <= max_abs {
        return Err(Error::WordPool(format!(
            "rating ties across the middle: lowest concrete {min_conc} vs highest abstract {max_abs}"
        )));
    }
    Ok(ConcretenessExtremes { concrete, abstract_ })
}
