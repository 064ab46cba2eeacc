//! Trajectory correlation between retrieval and benchmark learning curves.
//!
//! Uses synthetic sigmoid-shaped curves on the 18-checkpoint grid: one task
//! that turns on together with retrieval, one that turns on much later, and
//! four MMLU tasks that are averaged into their group before correlating.

use std::collections::BTreeMap;

use reprobe::stats::{group_average, minmax_normalize, trajectory_correlation, Trajectory};
use reprobe::sweep::PYTHIA_STEPS;

fn curve(label: &str, midpoint: f64, lo: f64, hi: f64, wiggle: f64) -> Trajectory {
    let pts = PYTHIA_STEPS
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let x = ((s as f64) + 1.0).log10();
            let y = lo + (hi - lo) / (1.0 + (-(x - midpoint) * 3.0).exp());
            (s, y + wiggle * ((i * 7 % 5) as f64 - 2.0))
        })
        .collect();
    Trajectory::new(label, pts).expect("increasing steps")
}

fn main() -> reprobe::Result<()> {
    let retrieval = curve("retrieval", 3.0, 0.0, 0.9, 0.004);
    let tasks = [
        curve("lambada_openai", 3.1, 0.016, 0.7, 0.01),
        curve("winogrande", 4.8, 0.5, 0.6, 0.01),
    ];
    for task in &tasks {
        let r = trajectory_correlation(&retrieval, task, 5000, 0)?;
        println!(
            "{:>16}: rho {:+.3} [{:+.3}, {:+.3}] over {} checkpoints",
            task.label, r.rho, r.ci_lo, r.ci_hi, r.n_points
        );
    }

    let mmlu: Vec<Trajectory> = (0..4)
        .map(|i| curve(&format!("mmlu_task_{i}"), 4.0 + 0.2 * i as f64, 0.25, 0.3, 0.003))
        .collect();
    let grouping: BTreeMap<String, String> = mmlu
        .iter()
        .enumerate()
        .map(|(i, t)| (t.label.clone(), if i < 2 { "MMLU (STEM)" } else { "MMLU (Other)" }.to_string()))
        .collect();
    for (group, avg) in group_average(&mmlu, &grouping)? {
        let r = trajectory_correlation(&retrieval, &avg, 5000, 0)?;
        let norm = minmax_normalize(&avg)?;
        let last = norm.points.last().map_or(0.0, |p| p.1);
        println!("{group:>16}: rho {:+.3} [{:+.3}, {:+.3}], normalized end value {last:.2}", r.rho, r.ci_lo, r.ci_hi);
    }
    Ok(())
}
