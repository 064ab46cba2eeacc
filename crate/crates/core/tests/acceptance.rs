//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so every line reaches the terminal.
//! `REPROBE_ACCEPT=<substring>` restricts the run to matching criteria.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use reprobe::metrics::{repeat_loss_change, Alignment, NounLoss};
use reprobe::stats::{bootstrap_ci, spearman, trajectory_correlation, trimmed_mean, Trajectory};
use reprobe::stimulus::{generate_arbitrary_set, ArbitrarySetParams, Condition, StimulusSet};
use reprobe::sweep::{
    concreteness_stimuli, run_sweep, ConcretenessOptions, EndpointSpec, ResultsStore, SummaryRow,
    SweepConfig,
};
use reprobe::toylm::{
    batch_loss, forward, grad, init_params, train_to_dir, ToyConfig, ToyRunConfig, ToyVocab,
};
use reprobe::wordpool::{ConcretenessNorms, NounPool};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// Metric

fn oracle_lr(first: &[f64], repeat: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..first.len() {
        acc += repeat[i] / first[i];
    }
    1.0 - acc / first.len() as f64
}

fn alignment(first: &[f64], repeat: &[f64]) -> Alignment {
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

fn metric_oracle() -> Outcome {
    let hand = repeat_loss_change("hand", &alignment(&[2.0, 4.0, 6.0], &[1.0, 1.0, 1.5]))
        .map_err(|e| e.to_string())?
        .lr
        .ok_or("hand example flagged degenerate")?;
    check(hand == 1.0 - (0.5 + 0.25 + 0.25) / 3.0, format!("hand example gave {hand}"))?;
    check(format!("{:.2}", 100.0 * hand) == "66.67", format!("hand example {hand}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=10);
        let first: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..25.0)).collect();
        let repeat: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..25.0)).collect();
        let got = repeat_loss_change("r", &alignment(&first, &repeat))
            .map_err(|e| e.to_string())?
            .lr
            .ok_or("random set flagged degenerate")?;
        worst = worst.max((got - oracle_lr(&first, &repeat)).abs());
    }
    check(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("hand 66.67%, 1000 random sets, max deviation {worst:.1e}"))
}

// Stats

fn brute_trimmed_mean(xs: &[f64], prop: f64) -> f64 {
    let mut v = xs.to_vec();
    let g = (prop * xs.len() as f64).floor() as usize;
    for _ in 0..g {
        let (imin, _) = v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        v.remove(imin);
        let (imax, _) = v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        v.remove(imax);
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn brute_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let below = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

fn stats_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_tm: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..60);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let prop = [0.0, 0.1, 0.2, 0.25, 0.4][rng.random_range(0..5)];
        let got = trimmed_mean(&xs, prop).map_err(|e| e.to_string())?;
        worst_tm = worst_tm.max((got - brute_trimmed_mean(&xs, prop)).abs());
    }
    check(worst_tm <= 1e-12, format!("trimmed mean deviation {worst_tm:e}"))?;
    let tm = trimmed_mean(&(1..=10).map(f64::from).collect::<Vec<_>>(), 0.2).unwrap();
    check(tm == 5.5, format!("trimmed mean of 1..10 = {tm}"))?;

    let hand = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    check((hand - 3.0 / 10f64.sqrt()).abs() <= 1e-12, format!("tied example {hand}"))?;
    let mut worst_sp: f64 = 0.0;
    for _ in 0..2000 {
        let n = rng.random_range(3..30);
        // Small integer support forces ties.
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let want = brute_pearson(&brute_ranks(&x), &brute_ranks(&y));
        match spearman(&x, &y) {
            Ok(r) => worst_sp = worst_sp.max((r - want).abs()),
            Err(_) => check(!want.is_finite(), format!("spearman rejected a defined case {x:?} {y:?}"))?,
        }
    }
    check(worst_sp <= 1e-12, format!("spearman deviation {worst_sp:e}"))?;

    let xs: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let a = bootstrap_ci(&xs, mean, 2000, 0.05, 9).map_err(|e| e.to_string())?;
    let b = bootstrap_ci(&xs, mean, 2000, 0.05, 9).map_err(|e| e.to_string())?;
    check(a.0.to_bits() == b.0.to_bits() && a.1.to_bits() == b.1.to_bits(), "bootstrap not deterministic")?;
    check(a.0 <= a.1, "bootstrap interval reversed")?;
    // Every resample of constant data is the data itself.
    let constant = [0.3; 40];
    let c = bootstrap_ci(&constant, mean, 1000, 0.05, 4).map_err(|e| e.to_string())?;
    check(c.0 == c.1 && c.0 == mean(&constant), format!("constant data gave {c:?}"))?;
    Ok(format!(
        "trimmed mean {worst_tm:.1e}, spearman {worst_sp:.1e}, bootstrap deterministic, constant CI degenerate"
    ))
}

// Stimuli

fn toy_pool() -> Result<NounPool, String> {
    let vocab = ToyVocab::builtin(ToyConfig::default().vocab_size).map_err(|e| e.to_string())?;
    let nouns = vocab.nouns();
    NounPool::from_lines("toy", nouns.iter().map(String::as_str)).map_err(|e| e.to_string())
}

fn rotation_complete(set: &StimulusSet, base_len: usize, cap: usize) -> Result<(), String> {
    for list in set.vignettes.chunks(base_len) {
        let mut seen: BTreeMap<(String, usize), usize> = BTreeMap::new();
        for v in list {
            for (p, w) in v.first_nouns().iter().enumerate() {
                *seen.entry((w.to_string(), p)).or_default() += 1;
            }
        }
        let nouns: std::collections::BTreeSet<&str> = seen.keys().map(|k| k.0.as_str()).collect();
        check(nouns.len() == base_len, format!("list has {} distinct nouns", nouns.len()))?;
        check(
            seen.len() == base_len * cap && seen.values().all(|&c| c == 1),
            "a noun does not occupy every position exactly once",
        )?;
    }
    Ok(())
}

fn zero_overlap(set: &StimulusSet) -> Result<(), String> {
    for v in &set.vignettes {
        let first = v.first_nouns();
        check(
            !v.second_nouns().iter().any(|w| first.contains(w)),
            format!("{} repeats a noun in the control list", v.id),
        )?;
    }
    Ok(())
}

fn synthetic_norms() -> ConcretenessNorms {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    ConcretenessNorms::from_entries((0..1500).map(|i| {
        let word: String = (0..8).map(|_| (b'a' + rng.random_range(0..26)) as char).collect();
        (format!("{word}{i}"), 1.0 + 4.0 * i as f64 / 1499.0)
    }))
    .expect("norms")
}

fn stimulus_counts() -> Outcome {
    let pool = toy_pool()?;
    let params = ArbitrarySetParams::default();
    let rep = generate_arbitrary_set(&pool, params, Condition::Repeat, 0).map_err(|e| e.to_string())?;
    let ctl = generate_arbitrary_set(&pool, params, Condition::Control, 0).map_err(|e| e.to_string())?;
    check(rep.len() == 230 && ctl.len() == 230, format!("arbitrary sets {} / {}", rep.len(), ctl.len()))?;
    rotation_complete(&rep, params.base_len, params.cap)?;
    rotation_complete(&ctl, params.base_len, params.cap)?;
    zero_overlap(&ctl)?;

    let norms = synthetic_norms();
    let opts = ConcretenessOptions::default();
    let (c, a) = concreteness_stimuli(&norms, opts, Condition::Repeat).map_err(|e| e.to_string())?;
    check(c.len() == 498 && a.len() == 498, format!("concreteness sets {} / {}", c.len(), a.len()))?;
    rotation_complete(&c, opts.cap, opts.cap)?;
    rotation_complete(&a, opts.cap, opts.cap)?;
    let (cc, ac) = concreteness_stimuli(&norms, opts, Condition::Control).map_err(|e| e.to_string())?;
    zero_overlap(&cc)?;
    zero_overlap(&ac)?;
    Ok("arbitrary 230, concrete 498, abstract 498, rotations complete, controls disjoint".into())
}

// Toy numerics

fn toy_numerics() -> Outcome {
    let small = |d: usize, seed: u64| ToyConfig {
        vocab_size: 64,
        d_model: d,
        n_layers: 2,
        n_heads: 2,
        d_ff: 2 * d,
        context_len: 16,
        init_std: 0.3,
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_norm: f64 = 0.0;
    for seed in 0..20 {
        let p = init_params(&small(8, seed)).map_err(|e| e.to_string())?;
        let ids: Vec<u32> = (0..16).map(|_| rng.random_range(0..64)).collect();
        let lp = forward(&p, &ids).map_err(|e| e.to_string())?;
        for row in lp.rows() {
            worst_norm = worst_norm.max((row.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs());
        }
        let at = rng.random_range(0..16);
        let mut other = ids.clone();
        other[at] = (other[at] + 1) % 64;
        let moved = forward(&p, &other).map_err(|e| e.to_string())?;
        for i in 0..at {
            check(
                lp.row(i).iter().zip(moved.row(i)).all(|(a, b)| a.to_bits() == b.to_bits()),
                format!("position {i} changed after perturbing position {at}"),
            )?;
        }
    }
    check(worst_norm <= 1e-6, format!("normalization error {worst_norm:e}"))?;

    let p = init_params(&small(16, 11)).map_err(|e| e.to_string())?;
    let batch: Vec<Vec<u32>> = (0..2).map(|_| (0..10).map(|_| rng.random_range(0..64)).collect()).collect();
    let g = grad(&p, &batch).map_err(|e| e.to_string())?.grad;
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let i = rng.random_range(0..g.len());
        let mut plus = p.clone();
        plus.data_mut()[i] += h;
        let mut minus = p.clone();
        minus.data_mut()[i] -= h;
        let fd = (batch_loss(&plus, &batch).unwrap() - batch_loss(&minus, &batch).unwrap()) / (2.0 * h);
        let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    check(worst < 1e-4, format!("finite-difference relative error {worst:e}"))?;
    Ok(format!("normalization {worst_norm:.1e}, causal, gradient relative error {worst:.1e}"))
}

// Toy transition

fn last_two(rows: &[SummaryRow]) -> Result<(&SummaryRow, &SummaryRow), String> {
    let first = rows.iter().min_by_key(|r| r.step).ok_or("no summary rows")?;
    let last = rows.iter().max_by_key(|r| r.step).ok_or("no summary rows")?;
    Ok((first, last))
}

fn toy_transition() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ckpts = dir.path().join("toy");
    let run = ToyRunConfig::default();
    let t0 = Instant::now();
    train_to_dir(&run, &ckpts, false).map_err(|e| e.to_string())?;
    let train_time = t0.elapsed();
    let tokens = run.train.steps * run.train.batch_tokens as u64;

    let mut by_condition = BTreeMap::new();
    for condition in [Condition::Repeat, Condition::Control] {
        let cfg = SweepConfig {
            endpoints: vec![EndpointSpec::Toy(ckpts.clone())],
            condition,
            bootstrap_b: 200,
            output_dir: dir.path().join("results"),
            ..Default::default()
        };
        let outcome = run_sweep(&cfg, false).map_err(|e| e.to_string())?;
        check(outcome.failures.is_empty(), format!("sweep failures: {:?}", outcome.failures))?;
        let rows: Vec<SummaryRow> = ResultsStore::new(&cfg.output_dir)
            .summaries()
            .map_err(|e| e.to_string())?
            .into_iter()
            .filter(|r| r.condition == condition)
            .collect();
        by_condition.insert(condition.as_str(), rows);
    }
    let (start, end) = last_two(&by_condition["repeat"])?;
    let (_, control_end) = last_two(&by_condition["control"])?;
    let pos = |r: &SummaryRow, p: usize| r.per_position.iter().find(|x| x.position == p).map(|x| x.lr);
    let (p1, p3) = (pos(end, 1).ok_or("no position 1")?, pos(end, 3).ok_or("no position 3")?);
    let summary = format!(
        "{tokens} tokens in {:.0}s; step 0 L^r {:+.1}%, final repeat {:.1}%, final control {:.1}%, positions 1/3 {:.1}%/{:.1}%",
        train_time.as_secs_f64(),
        100.0 * start.lr,
        100.0 * end.lr,
        100.0 * control_end.lr,
        100.0 * p1,
        100.0 * p3
    );
    check(start.step == 0, format!("first checkpoint is step {}", start.step))?;
    check((4_000_000..=6_000_000).contains(&tokens), format!("{tokens} tokens trained"))?;
    check(train_time <= Duration::from_secs(15 * 60), format!("training too slow. {summary}"))?;
    check(start.lr.abs() <= 0.10, format!("step 0 out of range. {summary}"))?;
    check(end.lr >= 0.50, format!("final repeat below 50%. {summary}"))?;
    check(end.lr - control_end.lr >= 0.40, format!("control gap below 40 points. {summary}"))?;
    check(p3 >= p1, format!("position 3 below position 1. {summary}"))?;
    Ok(summary)
}

// Trajectory correlation

fn trajectory_pipeline() -> Outcome {
    let steps: Vec<u64> = (0..27).map(|i| i * 1000).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ret_vals: Vec<f64> = (0..27).map(|_| rng.random_range(0.0..1.0)).collect();
    let ret = Trajectory::new("retrieval", steps.iter().copied().zip(ret_vals.iter().copied()).collect())
        .map_err(|e| e.to_string())?;
    let bench = Trajectory::new(
        "bench",
        steps.iter().copied().zip(ret_vals.iter().map(|v| (3.0 * v).exp() - 0.2)).collect(),
    )
    .map_err(|e| e.to_string())?;
    let r = trajectory_correlation(&ret, &bench, 1000, 1).map_err(|e| e.to_string())?;
    check(r.rho == 1.0, format!("monotone transform gave rho {}", r.rho))?;
    check(r.ci_lo <= r.ci_hi && r.ci_lo >= -1.0 && r.ci_hi <= 1.0, "bad interval")?;

    let mut small = 0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let mut noise = |label: &str| {
            let pts = steps.iter().map(|&s| (s, StandardNormal.sample(&mut rng))).collect();
            Trajectory::new(label, pts).expect("grid")
        };
        let (a, b) = (noise("a"), noise("b"));
        let r = trajectory_correlation(&a, &b, 100, seed).map_err(|e| e.to_string())?;
        if r.rho.abs() < 0.5 {
            small += 1;
        }
    }
    check(small >= 950, format!("only {small}/1000 noise pairs had |rho| < 0.5"))?;
    Ok(format!("monotone rho = 1.0, noise pairs |rho| < 0.5 in {small}/1000"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 6] = [
        ("metric oracle", metric_oracle, Duration::from_secs(1)),
        ("stats oracle", stats_oracle, Duration::from_secs(10)),
        ("stimulus counts", stimulus_counts, Duration::from_secs(1)),
        ("toy numerics", toy_numerics, Duration::from_secs(60)),
        ("toy transition", toy_transition, Duration::from_secs(20 * 60)),
        ("trajectory correlation", trajectory_pipeline, Duration::from_secs(30)),
    ];
    let filter = std::env::var("REPROBE_ACCEPT").unwrap_or_default();
    let mut failed = 0;
    for (name, run, limit) in criteria {
        if !name.contains(filter.as_str()) {
            continue;
        }
        let t0 = Instant::now();
        let result = run();
        let took = t0.elapsed();
        let result = result.and_then(|msg| {
            if took <= limit {
                Ok(msg)
            } else {
                Err(format!("took {:.1}s, limit {:.0}s. {msg}", took.as_secs_f64(), limit.as_secs_f64()))
            }
        });
        match result {
            Ok(msg) => println!("PASS {name} ({:.2}s): {msg}", took.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name} ({:.2}s): {msg}", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
