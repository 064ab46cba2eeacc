//! Aggregation and trajectory statistics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TRIM: f64 = 0.2;
pub const DEFAULT_BOOTSTRAP_B: usize = 5000;
pub const MIN_BOOTSTRAP_B: usize = 100;
const MAX_REDRAWS: usize = 1000;

/// A metric sampled at training steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub label: String,
    pub points: Vec<(u64, f64)>,
}

impl Trajectory {
    pub fn new(label: impl Into<String>, points: Vec<(u64, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Invalid("trajectory steps must be strictly increasing".into()));
        }
        Ok(Self {
            label: label.into(),
            points,
        })
    }

    pub fn steps(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps only points whose step is in `steps`.
    pub fn restrict(&self, steps: &[u64]) -> Self {
        Self {
            label: self.label.clone(),
            points: self
                .points
                .iter()
                .filter(|p| steps.binary_search(&p.0).is_ok())
                .copied()
                .collect(),
        }
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.steps() != other.steps() {
            return Err(Error::GridMismatch(format!(
                "{:?} has {} points, {:?} has {} on a different grid",
                self.label,
                self.len(),
                other.label,
                other.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_points: usize,
    pub bootstrap_b: usize,
    pub seed: u64,
    /// Resamples thrown away because one side was constant.
    pub redraws: usize,
}

/// Mean after dropping `floor(prop * n)` values from each end.
pub fn trimmed_mean(xs: &[f64], prop: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Invalid("trimmed mean of empty input".into()));
    }
    if !(0.0..0.5).contains(&prop) {
        return Err(Error::Invalid(format!("trim proportion {prop} outside [0, 0.5)")));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let g = (prop * xs.len() as f64).floor() as usize;
    let kept = &sorted[g..sorted.len() - g];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linear-interpolated quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Generator for bootstrap resample `i`; independent of every other index.
fn resample_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

fn check_bootstrap(b: usize, alpha: f64) -> Result<()> {
    if b < MIN_BOOTSTRAP_B {
        return Err(Error::Invalid(format!("bootstrap needs at least {MIN_BOOTSTRAP_B} resamples, got {b}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Percentile bootstrap interval of `statistic` over `xs`.
pub fn bootstrap_ci<F>(xs: &[f64], statistic: F, b: usize, alpha: f64, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if xs.len() < 2 {
        return Err(Error::Invalid("bootstrap needs at least two observations".into()));
    }
    check_bootstrap(b, alpha)?;
    let n = xs.len();
    let mut stats: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = resample_rng(seed, i);
            let sample: Vec<f64> = (0..n).map(|_| xs[rng.random_range(0..n)]).collect();
            statistic(&sample)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    Ok((
        quantile_sorted(&stats, alpha / 2.0),
        quantile_sorted(&stats, 1.0 - alpha / 2.0),
    ))
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Invalid("pearson needs two equal-length vectors of length >= 2".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation with a constant vector".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Invalid(format!(
            "spearman needs equal lengths >= 3, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Spearman correlation between two trajectories on the same step grid, with
/// a percentile bootstrap over checkpoint pairs. Resamples in which either
/// side is constant are redrawn.
pub fn trajectory_correlation(
    ret: &Trajectory,
    bench: &Trajectory,
    b: usize,
    seed: u64,
) -> Result<CorrelationResult> {
    ret.check_same_grid(bench)?;
    check_bootstrap(b, 0.05)?;
    let x = ret.values();
    let y = bench.values();
    let rho = spearman(&x, &y)?;
    let n = x.len();
    let draws: Vec<Result<(f64, usize)>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = resample_rng(seed, i);
            for redraw in 0..MAX_REDRAWS {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let xs: Vec<f64> = idx.iter().map(|&k| x[k]).collect();
                let ys: Vec<f64> = idx.iter().map(|&k| y[k]).collect();
                match spearman(&xs, &ys) {
                    Ok(r) => return Ok((r, redraw)),
                    Err(Error::Undefined(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Undefined(format!(
                "resample {i}: {MAX_REDRAWS} consecutive constant resamples"
            )))
        })
        .collect();
    let mut rhos = Vec::with_capacity(b);
    let mut redraws = 0;
    for d in draws {
        let (r, k) = d?;
        rhos.push(r);
        redraws += k;
    }
    if redraws > 0 {
        log::info!(
            "{} vs {}: {redraws} constant resamples redrawn",
            ret.label,
            bench.label
        );
    }
    rhos.sort_by(f64::total_cmp);
    Ok(CorrelationResult {
        rho,
        ci_lo: quantile_sorted(&rhos, 0.025),
        ci_hi: quantile_sorted(&rhos, 0.975),
        n_points: n,
        bootstrap_b: b,
        seed,
        redraws,
    })
}

/// Pointwise mean of the member trajectories of each group. Members must share
/// one step grid; trajectories with no group entry are ignored.
pub fn group_average(
    trajs: &[Trajectory],
    grouping: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, Trajectory>> {
    let mut members: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajs {
        if let Some(g) = grouping.get(&t.label) {
            members.entry(g.as_str()).or_default().push(t);
        }
    }
    let mut out = BTreeMap::new();
    for (group, ts) in members {
        let first = ts[0];
        for t in &ts[1..] {
            first.check_same_grid(t)?;
        }
        let points = first
            .points
            .iter()
            .enumerate()
            .map(|(i, &(step, _))| (step, ts.iter().map(|t| t.points[i].1).sum::<f64>() / ts.len() as f64))
            .collect();
        out.insert(group.to_string(), Trajectory::new(group, points)?);
    }
    Ok(out)
}

/// Concrete minus abstract, pointwise.
pub fn concreteness_delta(concrete: &Trajectory, abstract_: &Trajectory) -> Result<Trajectory> {
    concrete.check_same_grid(abstract_)?;
    Trajectory::new(
        format!("{} - {}", concrete.label, abstract_.label),
        concrete
            .points
            .iter()
            .zip(&abstract_.points)
            .map(|(c, a)| (c.0, c.1 - a.1))
            .collect(),
    )
}

/// Rescales values to `[0, 1]`.
pub fn minmax_normalize(traj: &Trajectory) -> Result<Trajectory> {
    let vals = traj.values();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Undefined(format!("{} is constant", traj.label)));
    }
    Ok(Trajectory {
        label: traj.label.clone(),
        points: traj
            .points
            .iter()
            .map(|&(s, v)| (s, (v - lo) / (hi - lo)))
            .collect(),
    })
}
