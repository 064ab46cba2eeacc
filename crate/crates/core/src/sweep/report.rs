use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::benchmarks::{chance_level, task_trajectories, BenchmarkRecord};
use super::correlate::{same_model, CORRELATION_HEADER};
use super::run::ARBITRARY_SET;
use super::store::{ResultsStore, SummaryRow};
use super::svg::{BarChart, LineChart, Series};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::stats::{concreteness_delta, minmax_normalize, Trajectory};
use crate::stimulus::Condition;

pub const CONCRETE_SET: &str = "concrete";
pub const ABSTRACT_SET: &str = "abstract";

/// Control-condition reference band, in percent.
const CONTROL_BAND: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcretenessDelta {
    pub model: String,
    pub condition: Condition,
    pub concrete: Trajectory,
    pub abstract_: Trajectory,
    pub delta: Trajectory,
    pub tokens_seen: BTreeMap<u64, u64>,
}

fn trajectory(rows: &[&SummaryRow], label: &str) -> Result<Trajectory> {
    let mut pts: Vec<(u64, f64)> = rows.iter().map(|r| (r.step, r.lr)).collect();
    pts.sort_by_key(|p| p.0);
    Trajectory::new(label, pts)
}

/// Concrete minus abstract L^r per model and condition, on the steps both
/// sets were scored at.
pub fn concreteness_deltas(rows: &[SummaryRow]) -> Result<Vec<ConcretenessDelta>> {
    let mut cells: BTreeMap<(&str, &str), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        cells.entry((&r.model, r.condition.as_str())).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((model, _), rs) in cells {
        let conc: Vec<&SummaryRow> = rs.iter().copied().filter(|r| r.set == CONCRETE_SET).collect();
        let abst: Vec<&SummaryRow> = rs.iter().copied().filter(|r| r.set == ABSTRACT_SET).collect();
        if conc.is_empty() || abst.is_empty() {
            continue;
        }
        let shared: Vec<u64> = conc
            .iter()
            .map(|r| r.step)
            .filter(|s| abst.iter().any(|a| a.step == *s))
            .collect();
        let mut shared = shared;
        shared.sort_unstable();
        let c = trajectory(&conc, CONCRETE_SET)?.restrict(&shared);
        let a = trajectory(&abst, ABSTRACT_SET)?.restrict(&shared);
        out.push(ConcretenessDelta {
            model: model.to_string(),
            condition: rs[0].condition,
            delta: concreteness_delta(&c, &a)?,
            concrete: c,
            abstract_: a,
            tokens_seen: conc.iter().map(|r| (r.step, r.tokens_seen)).collect(),
        });
    }
    Ok(out)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
}

fn series_key(r: &SummaryRow) -> String {
    format!("{} {}/{}", r.model, r.set, r.condition)
}

#[derive(Deserialize)]
struct CorrelationCsvRow {
    model: String,
    task_key: String,
    group: String,
    rho: f64,
}

/// Renders every table and chart for the results in `store` into `out_dir`.
///
/// Picks up `benchmarks.json` and `correlations.csv` from the store root
/// when they exist. Fails with [`Error::NoResults`] on an empty store.
pub fn write_report(store: &ResultsStore, out_dir: &Path) -> Result<ReportFiles> {
    let rows = store.summaries()?;
    if rows.is_empty() {
        return Err(Error::NoResults);
    }
    let mut files = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = out_dir.join(name);
        write_atomic(&path, &bytes)?;
        files.push(path);
        Ok(())
    };

    emit(
        "summary.csv",
        csv_bytes(
            &[
                "model", "set", "condition", "revision", "step", "tokens_seen", "n_vignettes",
                "n_degenerate", "lr", "ci_lo", "ci_hi",
            ],
            rows.iter().map(|r| {
                vec![
                    r.model.clone(),
                    r.set.clone(),
                    r.condition.to_string(),
                    r.revision.clone(),
                    r.step.to_string(),
                    r.tokens_seen.to_string(),
                    r.n_vignettes.to_string(),
                    r.n_degenerate.to_string(),
                    r.lr.to_string(),
                    r.ci_lo.to_string(),
                    r.ci_hi.to_string(),
                ]
            }),
        )?,
    )?;
    emit(
        "per_position.csv",
        csv_bytes(
            &[
                "model", "set", "condition", "revision", "step", "tokens_seen", "position", "lr",
                "ci_lo", "ci_hi",
            ],
            rows.iter().flat_map(|r| {
                r.per_position.iter().map(move |p| {
                    vec![
                        r.model.clone(),
                        r.set.clone(),
                        r.condition.to_string(),
                        r.revision.clone(),
                        r.step.to_string(),
                        r.tokens_seen.to_string(),
                        p.position.to_string(),
                        p.lr.to_string(),
                        p.ci_lo.to_string(),
                        p.ci_hi.to_string(),
                    ]
                })
            }),
        )?,
    )?;

    let corr_path = store.correlations_path();
    let correlations: Vec<CorrelationCsvRow> = if corr_path.is_file() {
        let raw = crate::fsio::read(&corr_path)?;
        let parsed = csv::Reader::from_reader(raw.as_slice())
            .deserialize()
            .collect::<std::result::Result<_, _>>()?;
        emit("correlations.csv", raw)?;
        parsed
    } else {
        emit("correlations.csv", csv_bytes(&CORRELATION_HEADER, [])?)?;
        Vec::new()
    };

    let deltas = concreteness_deltas(&rows)?;
    emit(
        "concreteness_delta.csv",
        csv_bytes(
            &["model", "condition", "step", "tokens_seen", "concrete", "abstract", "delta"],
            deltas.iter().flat_map(|d| {
                d.delta.points.iter().enumerate().map(move |(i, &(step, delta))| {
                    vec![
                        d.model.clone(),
                        d.condition.to_string(),
                        step.to_string(),
                        d.tokens_seen.get(&step).copied().unwrap_or(0).to_string(),
                        d.concrete.points[i].1.to_string(),
                        d.abstract_.points[i].1.to_string(),
                        delta.to_string(),
                    ]
                })
            }),
        )?,
    )?;

    // L^r against tokens seen.
    let mut by_series: BTreeMap<String, Vec<&SummaryRow>> = BTreeMap::new();
    for r in &rows {
        by_series.entry(series_key(r)).or_default().push(r);
    }
    let has_control = rows.iter().any(|r| r.condition == Condition::Control);
    let lr_chart = LineChart {
        title: "Repeat loss change across training".into(),
        x_label: "tokens seen (log10)".into(),
        y_label: "L^r (%)".into(),
        log_x: true,
        series: by_series
            .iter()
            .map(|(name, rs)| Series {
                name: name.clone(),
                points: rs.iter().map(|r| (r.tokens_seen as f64, 100.0 * r.lr)).collect(),
                dashed: rs[0].condition == Condition::Control,
            })
            .collect(),
        hlines: if has_control {
            vec![(CONTROL_BAND, "+10%".into()), (-CONTROL_BAND, "-10%".into())]
        } else {
            vec![]
        },
        note: Some("checkpoint 0 drawn at 1 token".into()),
    };
    emit("lr_vs_tokens.svg", lr_chart.render().into_bytes())?;

    // Per-position L^r at each series' last checkpoint.
    let finals: Vec<&SummaryRow> = by_series.values().filter_map(|rs| rs.last().copied()).collect();
    let n_pos = finals.iter().map(|r| r.per_position.len()).max().unwrap_or(0);
    let bars = BarChart {
        title: "Repeat loss change by list position (last checkpoint)".into(),
        y_label: "L^r (%)".into(),
        categories: (1..=n_pos).map(|p| format!("position {p}")).collect(),
        groups: finals
            .iter()
            .map(|r| {
                let mut v = vec![f64::NAN; n_pos];
                for p in &r.per_position {
                    v[p.position - 1] = 100.0 * p.lr;
                }
                (format!("{} {}", series_key(r), r.revision), v)
            })
            .collect(),
    };
    emit("per_position.svg", bars.render().into_bytes())?;

    let delta_chart = LineChart {
        title: "Concrete minus abstract repeat loss change".into(),
        x_label: "tokens seen (log10)".into(),
        y_label: "delta L^r (points)".into(),
        log_x: true,
        series: deltas
            .iter()
            .map(|d| Series {
                name: format!("{} {}", d.model, d.condition),
                points: d
                    .delta
                    .points
                    .iter()
                    .map(|&(s, v)| (d.tokens_seen.get(&s).copied().unwrap_or(0) as f64, 100.0 * v))
                    .collect(),
                dashed: false,
            })
            .collect(),
        hlines: vec![(0.0, "0".into())],
        note: None,
    };
    emit("concreteness_delta.svg", delta_chart.render().into_bytes())?;

    emit("normalized_trajectories.svg", overlay(store, &rows, &correlations)?.render().into_bytes())?;

    Ok(ReportFiles {
        dir: out_dir.to_path_buf(),
        files,
    })
}

/// Min-max normalized retrieval trajectory of the first model with
/// benchmark data, overlaid with its four best-correlated ungrouped tasks.
fn overlay(store: &ResultsStore, rows: &[SummaryRow], corr: &[CorrelationCsvRow]) -> Result<LineChart> {
    let mut chart = LineChart {
        title: "Min-max normalized learning trajectories".into(),
        x_label: "training step (log10)".into(),
        y_label: "normalized score".into(),
        log_x: true,
        series: vec![],
        hlines: vec![],
        note: None,
    };
    let records: Vec<BenchmarkRecord> = if store.benchmarks_path().is_file() {
        serde_json::from_slice(&crate::fsio::read(&store.benchmarks_path())?)?
    } else {
        Vec::new()
    };
    let retrieval = super::correlate::retrieval_trajectories(rows, ARBITRARY_SET, Condition::Repeat)?;
    let pick = retrieval
        .iter()
        .find(|(m, _)| records.iter().any(|r| same_model(m, &r.model)))
        .or_else(|| retrieval.iter().next());
    let Some((model, ret)) = pick else {
        return Ok(chart);
    };
    if let Ok(n) = minmax_normalize(ret) {
        chart.series.push(Series {
            name: format!("{model} L^r"),
            points: n.points.iter().map(|&(s, v)| (s as f64, v)).collect(),
            dashed: false,
        });
    }
    let Some(bm) = records.iter().map(|r| r.model.clone()).find(|m| same_model(model, m)) else {
        return Ok(chart);
    };
    let mut tasks: Vec<Trajectory> = task_trajectories(&records, &bm)?
        .into_iter()
        .filter(|t| records.iter().any(|r| r.task_key == t.label && r.group.is_none()))
        .collect();
    let rho = |t: &Trajectory| {
        corr.iter()
            .find(|c| c.task_key == t.label && c.group.is_empty() && same_model(&c.model, model))
            .map_or(f64::NEG_INFINITY, |c| c.rho)
    };
    tasks.sort_by(|a, b| rho(b).total_cmp(&rho(a)).then(a.label.cmp(&b.label)));
    let mut notes = Vec::new();
    for t in tasks.iter().take(4) {
        if let Ok(n) = minmax_normalize(t) {
            chart.series.push(Series {
                name: t.label.clone(),
                points: n.points.iter().map(|&(s, v)| (s as f64, v)).collect(),
                dashed: true,
            });
            if let Some(c) = chance_level(&t.label) {
                notes.push(format!("{} chance {c}", t.label));
            }
        }
    }
    if !notes.is_empty() {
        chart.note = Some(notes.join("; "));
    }
    Ok(chart)
}
