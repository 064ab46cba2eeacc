//! Published zero-shot accuracy trajectories in a normalized CSV layout.
//!
//! Every `*.csv` in the directory except `groups.csv` has the header
//! `model,task_key,step,accuracy`. An optional `groups.csv`
//! (`task_key,group`, empty group for ungrouped tasks) overrides the
//! built-in task grouping.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Trajectory;

const BUILTIN_GROUPS: &str = include_str!("../../data/table5_groups.csv");
pub const GROUPS_FILE: &str = "groups.csv";
pub const LAMBADA_TASK_KEY: &str = "lambada_openai";

/// Accuracy of predicting a random in-context token on Lambada.
pub const LAMBADA_CHANCE: f64 = 0.016;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub model: String,
    pub task_key: String,
    pub group: Option<String>,
    pub step: u64,
    pub accuracy: f64,
}

/// Chance accuracy drawn as a reference line next to a task's trajectory.
pub fn chance_level(task_key: &str) -> Option<f64> {
    match task_key {
        LAMBADA_TASK_KEY => Some(LAMBADA_CHANCE),
        "arc_challenge" | "arc_easy" | "logiqa" | "sciq" => Some(0.25),
        k if k.starts_with("mmlu_") => Some(0.25),
        "piqa" | "wsc" | "winogrande" => Some(0.5),
        _ => None,
    }
}

#[derive(Deserialize)]
struct GroupRow {
    task_key: String,
    group: Option<String>,
}

#[derive(Deserialize)]
struct Row {
    model: String,
    task_key: String,
    step: u64,
    accuracy: f64,
}

/// `(row, task_key, group)` triples, rows counted from the header (row 1).
fn parse_groups(raw: &[u8], file: &str) -> Result<Vec<(usize, String, Option<String>)>> {
    let mut rdr = csv::Reader::from_reader(raw);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<GroupRow>().enumerate() {
        let row = row.map_err(|e| Error::Benchmark {
            file: file.into(),
            row: i + 2,
            message: e.to_string(),
        })?;
        let group = row.group.filter(|g| !g.trim().is_empty());
        out.push((i + 2, row.task_key.trim().to_string(), group));
    }
    Ok(out)
}

/// Task key to group for the 65 published tasks; ungrouped tasks map to `None`.
pub fn builtin_groups() -> BTreeMap<String, Option<String>> {
    parse_groups(BUILTIN_GROUPS.as_bytes(), "built-in groups")
        .expect("built-in groups parse")
        .into_iter()
        .map(|(_, k, g)| (k, g))
        .collect()
}

/// Reads and validates one accuracy file. Rows are numbered from the header (row 1).
pub fn parse_benchmark_csv(raw: &[u8], file: &str) -> Result<Vec<BenchmarkRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(raw);
    let headers = rdr.headers()?.clone();
    let expected = ["model", "task_key", "step", "accuracy"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Benchmark {
            file: file.into(),
            row: 1,
            message: format!("header must be {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let bad = |message: String| Error::Benchmark {
            file: file.into(),
            row: i + 2,
            message,
        };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if !(0.0..=1.0).contains(&row.accuracy) {
            return Err(bad(format!("accuracy {} outside [0, 1]", row.accuracy)));
        }
        out.push(BenchmarkRecord {
            model: row.model,
            task_key: row.task_key,
            group: None,
            step: row.step,
            accuracy: row.accuracy,
        });
    }
    Ok(out)
}

/// Loads every accuracy file in `dir` and assigns groups.
pub fn import_benchmarks(dir: &Path) -> Result<Vec<BenchmarkRecord>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut groups = builtin_groups();
    let mut records = Vec::new();
    let mut custom = None;
    for path in files {
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
        let raw = crate::fsio::read(&path)?;
        if name == GROUPS_FILE {
            custom = Some(parse_groups(&raw, &name)?);
        } else {
            records.extend(parse_benchmark_csv(&raw, &name)?);
        }
    }
    if let Some(custom) = custom {
        for (row, key, _) in &custom {
            if !groups.contains_key(key) && !records.iter().any(|r| &r.task_key == key) {
                return Err(Error::Benchmark {
                    file: GROUPS_FILE.into(),
                    row: *row,
                    message: format!("unknown task_key {key:?}"),
                });
            }
        }
        groups = custom.into_iter().map(|(_, k, g)| (k, g)).collect();
    }
    for r in &mut records {
        r.group = groups.get(&r.task_key).cloned().flatten();
    }
    records.sort_by(|a, b| (&a.model, &a.task_key, a.step).cmp(&(&b.model, &b.task_key, b.step)));
    if let Some(w) = records.windows(2).find(|w| {
        (&w[0].model, &w[0].task_key, w[0].step) == (&w[1].model, &w[1].task_key, w[1].step)
    }) {
        return Err(Error::Invalid(format!(
            "duplicate accuracy for {} {} step {}",
            w[0].model, w[0].task_key, w[0].step
        )));
    }
    Ok(records)
}

/// One accuracy trajectory per task of `model`, labelled by task key.
pub fn task_trajectories(records: &[BenchmarkRecord], model: &str) -> Result<Vec<Trajectory>> {
    let mut by_task: BTreeMap<&str, Vec<(u64, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.model == model) {
        by_task.entry(&r.task_key).or_default().push((r.step, r.accuracy));
    }
    by_task
        .into_iter()
        .map(|(task, mut pts)| {
            pts.sort_by_key(|p| p.0);
            Trajectory::new(task, pts)
        })
        .collect()
}
