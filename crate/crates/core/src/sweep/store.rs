//! On-disk results: per-vignette scores and one summary row per
//! (model, stimulus set, condition, revision).
//!
//! ```text
//! <root>/scores/<model>/<set>-<condition>/<revision>.jsonl
//! <root>/summary/<model>/<set>-<condition>/<revision>.json
//! ```
//! A summary file is written last, so its presence marks a finished pair.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::metrics::{read_scores_jsonl, write_scores_jsonl, RetrievalScore};
use crate::stats::{bootstrap_ci, trimmed_mean};
use crate::stimulus::Condition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSummary {
    /// 1-based ordinal position in the list.
    pub position: usize,
    pub lr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub set: String,
    pub condition: Condition,
    pub revision: String,
    pub step: u64,
    pub tokens_seen: u64,
    pub n_vignettes: usize,
    /// Vignettes excluded because a first-occurrence loss was ~0 bits.
    pub n_degenerate: usize,
    /// Trimmed-mean L^r as a fraction.
    pub lr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub per_position: Vec<PositionSummary>,
}

/// Identifies one scored (model, set, condition, revision) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunKey {
    pub model: String,
    pub set: String,
    pub condition: Condition,
    pub revision: String,
}

/// Aggregation settings for a summary row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryParams {
    pub trim: f64,
    pub bootstrap_b: usize,
    pub seed: u64,
}

/// Trimmed mean and percentile CI, overall and per position, over the
/// non-degenerate vignettes.
pub fn summarize(
    key: &RunKey,
    step: u64,
    tokens_seen: u64,
    scores: &[RetrievalScore],
    params: SummaryParams,
) -> Result<SummaryRow> {
    let kept: Vec<&RetrievalScore> = scores.iter().filter(|s| !s.degenerate).collect();
    let lrs: Vec<f64> = kept.iter().filter_map(|s| s.lr).collect();
    if lrs.len() < 2 {
        return Err(Error::Undefined(format!(
            "{}/{}: fewer than two non-degenerate vignettes",
            key.model, key.revision
        )));
    }
    let (lr, ci_lo, ci_hi) = trimmed_with_ci(&lrs, params)?;
    let n_pos = kept.iter().map(|s| s.lr_per_position.len()).max().unwrap_or(0);
    let mut per_position = Vec::with_capacity(n_pos);
    for p in 0..n_pos {
        let xs: Vec<f64> = kept.iter().filter_map(|s| s.lr_per_position.get(p).copied()).collect();
        if xs.len() < 2 {
            continue;
        }
        let (lr, ci_lo, ci_hi) = trimmed_with_ci(&xs, params)?;
        per_position.push(PositionSummary {
            position: p + 1,
            lr,
            ci_lo,
            ci_hi,
        });
    }
    Ok(SummaryRow {
        model: key.model.clone(),
        set: key.set.clone(),
        condition: key.condition,
        revision: key.revision.clone(),
        step,
        tokens_seen,
        n_vignettes: scores.len(),
        n_degenerate: scores.len() - kept.len(),
        lr,
        ci_lo,
        ci_hi,
        per_position,
    })
}

fn trimmed_with_ci(xs: &[f64], p: SummaryParams) -> Result<(f64, f64, f64)> {
    let point = trimmed_mean(xs, p.trim)?;
    let (lo, hi) = bootstrap_ci(
        xs,
        |s| trimmed_mean(s, p.trim).unwrap_or(f64::NAN),
        p.bootstrap_b,
        0.05,
        p.seed,
    )?;
    Ok((point, lo, hi))
}

/// Replaces characters that are unsafe in a path component.
fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ResultsStore {
    root: PathBuf,
}

impl ResultsStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn cell(&self, kind: &str, key: &RunKey, ext: &str) -> PathBuf {
        self.root
            .join(kind)
            .join(sanitize(&key.model))
            .join(format!("{}-{}", sanitize(&key.set), key.condition))
            .join(format!("{}.{ext}", sanitize(&key.revision)))
    }

    pub fn scores_path(&self, key: &RunKey) -> PathBuf {
        self.cell("scores", key, "jsonl")
    }

    pub fn summary_path(&self, key: &RunKey) -> PathBuf {
        self.cell("summary", key, "json")
    }

    /// Normalized benchmark records saved by the importer.
    pub fn benchmarks_path(&self) -> PathBuf {
        self.root.join("benchmarks.json")
    }

    pub fn correlations_path(&self) -> PathBuf {
        self.root.join("correlations.csv")
    }

    pub fn is_done(&self, key: &RunKey) -> bool {
        self.summary_path(key).is_file()
    }

    /// Writes scores, then the summary, each atomically.
    pub fn write(&self, key: &RunKey, scores: &[RetrievalScore], summary: &SummaryRow) -> Result<()> {
        let mut buf = Vec::new();
        write_scores_jsonl(scores, &mut buf)?;
        write_atomic(&self.scores_path(key), &buf)?;
        write_atomic(&self.summary_path(key), &serde_json::to_vec_pretty(summary)?)
    }

    pub fn read_scores(&self, key: &RunKey) -> Result<Vec<RetrievalScore>> {
        let path = self.scores_path(key);
        let raw = crate::fsio::read(&path)?;
        read_scores_jsonl(raw.as_slice())
    }

    /// Every summary row, sorted by model, set, condition, then step.
    pub fn summaries(&self) -> Result<Vec<SummaryRow>> {
        let mut rows = Vec::new();
        let dir = self.root.join("summary");
        if dir.is_dir() {
            collect_json(&dir, &mut rows)?;
        }
        rows.sort_by(|a: &SummaryRow, b: &SummaryRow| {
            (&a.model, &a.set, a.condition.as_str(), a.step).cmp(&(&b.model, &b.set, b.condition.as_str(), b.step))
        });
        Ok(rows)
    }
}

fn collect_json(dir: &Path, rows: &mut Vec<SummaryRow>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_json(&path, rows)?;
        } else if path.extension().is_some_and(|x| x == "json") {
            rows.push(serde_json::from_slice(&crate::fsio::read(&path)?)?);
        }
    }
    Ok(())
}
