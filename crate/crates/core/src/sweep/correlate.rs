use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use super::benchmarks::{task_trajectories, BenchmarkRecord};
use super::store::SummaryRow;
use crate::error::{Error, Result};
use crate::stats::{group_average, trajectory_correlation, CorrelationResult, Trajectory};
use crate::stimulus::Condition;

/// Fewest shared checkpoints a correlation is computed over.
pub const MIN_SHARED_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub model: String,
    /// Task key, or the group name for averaged groups.
    pub task_key: String,
    pub group: Option<String>,
    pub result: CorrelationResult,
}

/// Loose model-name match: case-insensitive, ignoring an organisation
/// prefix (`EleutherAI/`) and a `pythia-` prefix, so `EleutherAI/pythia-160m`
/// pairs with `160m`.
pub fn same_model(a: &str, b: &str) -> bool {
    fn norm(s: &str) -> String {
        let s = s.rsplit('/').next().unwrap_or(s).to_ascii_lowercase();
        s.strip_prefix("pythia-").map(str::to_string).unwrap_or(s)
    }
    norm(a) == norm(b)
}

/// L^r trajectories keyed by model, for one stimulus set and condition.
pub fn retrieval_trajectories(
    rows: &[SummaryRow],
    set: &str,
    condition: Condition,
) -> Result<BTreeMap<String, Trajectory>> {
    let mut by_model: BTreeMap<&str, Vec<(u64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.set == set && r.condition == condition) {
        by_model.entry(&r.model).or_default().push((r.step, r.lr));
    }
    by_model
        .into_iter()
        .map(|(m, mut pts)| {
            pts.sort_by_key(|p| p.0);
            Ok((m.to_string(), Trajectory::new(m, pts)?))
        })
        .collect()
}

fn shared_steps(a: &Trajectory, b: &Trajectory) -> Vec<u64> {
    let bs: BTreeSet<u64> = b.steps().into_iter().collect();
    a.steps().into_iter().filter(|s| bs.contains(s)).collect()
}

/// Correlates each model's retrieval trajectory with every benchmark task
/// (MMLU tasks averaged per group first) over the intersection of their
/// step grids. Pairs with fewer than [`MIN_SHARED_POINTS`] shared steps or
/// a constant side are skipped with a warning.
pub fn correlate_all(
    retrieval: &BTreeMap<String, Trajectory>,
    records: &[BenchmarkRecord],
    b: usize,
    seed: u64,
) -> Result<Vec<CorrelationRow>> {
    let bench_models: BTreeSet<&str> = records.iter().map(|r| r.model.as_str()).collect();
    let mut out = Vec::new();
    for (model, ret) in retrieval {
        let Some(bm) = bench_models.iter().find(|m| same_model(model, m)) else {
            continue;
        };
        let tasks = task_trajectories(records, bm)?;
        let grouping: BTreeMap<String, String> = records
            .iter()
            .filter(|r| r.model == *bm)
            .filter_map(|r| r.group.clone().map(|g| (r.task_key.clone(), g)))
            .collect();

        let mut targets: Vec<(String, Option<String>, Trajectory)> = tasks
            .iter()
            .filter(|t| !grouping.contains_key(&t.label))
            .map(|t| (t.label.clone(), None, t.clone()))
            .collect();
        let mut members: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
        for t in &tasks {
            if let Some(g) = grouping.get(&t.label) {
                members.entry(g).or_default().push(t);
            }
        }
        for (group, ts) in members {
            let mut grid: Vec<u64> = ret.steps();
            for t in &ts {
                let s: BTreeSet<u64> = t.steps().into_iter().collect();
                grid.retain(|x| s.contains(x));
            }
            let restricted: Vec<Trajectory> = ts.iter().map(|t| t.restrict(&grid)).collect();
            let avg = group_average(&restricted, &grouping)?;
            if let Some(t) = avg.get(group) {
                targets.push((group.to_string(), Some(group.to_string()), t.clone()));
            }
        }

        for (task_key, group, bench) in targets {
            let grid = shared_steps(ret, &bench);
            if grid.len() < MIN_SHARED_POINTS {
                warn!(
                    "{model} vs {task_key}: {} shared checkpoints, need {MIN_SHARED_POINTS}; skipped",
                    grid.len()
                );
                continue;
            }
            match trajectory_correlation(&ret.restrict(&grid), &bench.restrict(&grid), b, seed) {
                Ok(result) => out.push(CorrelationRow {
                    model: model.clone(),
                    task_key,
                    group,
                    result,
                }),
                Err(Error::Undefined(msg)) => warn!("{model} vs {task_key}: {msg}; skipped"),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

pub const CORRELATION_HEADER: [&str; 9] =
    ["model", "task_key", "group", "rho", "ci_lo", "ci_hi", "n_points", "b", "seed"];

pub fn write_correlations_csv(rows: &[CorrelationRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CORRELATION_HEADER)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.task_key.clone(),
            r.group.clone().unwrap_or_default(),
            r.result.rho.to_string(),
            r.result.ci_lo.to_string(),
            r.result.ci_hi.to_string(),
            r.result.n_points.to_string(),
            r.result.bootstrap_b.to_string(),
            r.result.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("correlations.csv", e))
}
