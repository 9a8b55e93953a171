//! Acceptance suite. Runs every criterion in sequence, prints one
//! PASS/FAIL line each and fails if any criterion fails.
//!
//! `cargo test --release --test acceptance`

mod common;

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use pars::features::SparseVec;
use pars::metrics::{kendall_tau_b, latency_summary, nearest_rank};
use pars::predictor::{
    build_pairs, evaluate, margin_ranking_loss, pair_loss, pair_loss_grad, train, Label, Objective,
    OracleScorer, TrainConfig,
};
use pars::scheduler::Policy;
use pars::simulator::{run, CostModel, SimConfig};
use pars::workload::{
    generate_arrivals, synthesize_dataset, ArrivalMode, Dataset, PromptRecord, SynthConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    brute_min_mean_completion, brute_qualifying, brute_tau_b, burst, dataset, dyadic_cost,
    label_consistent, records_with_lengths,
};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn loss_exactness() -> Outcome {
    let hand = [
        (2.0, 0.5, Label::ALonger, 1.0, 0.0),
        (0.0, 0.0, Label::ALonger, 1.0, 1.0),
        (0.5, 2.0, Label::ALonger, 1.0, 2.5),
        (0.5, 2.0, Label::BLonger, 1.0, 0.0),
        (2.0, 0.5, Label::BLonger, 1.0, 2.5),
        (1.0, 0.0, Label::ALonger, 1.0, 0.0),
        (1.0, 0.0, Label::ALonger, 0.0, 0.0),
        (0.0, 1.0, Label::ALonger, 0.0, 1.0),
        (-1.5, -1.5, Label::BLonger, 0.25, 0.25),
    ];
    let mut bad = Vec::new();
    for &(a, b, y, m, want) in &hand {
        if margin_ranking_loss(a, b, y, m) != want {
            bad.push(format!("({a}, {b}, {y:?}, {m})"));
        }
    }
    let values = [-3.0, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 2.0, 3.5];
    let mut cases = hand.len();
    for &a in &values {
        for &b in &values {
            for y in [Label::ALonger, Label::BLonger] {
                for m in [0.0, 0.25, 0.5, 1.0, 2.0] {
                    let z = y.sign() * (a - b);
                    let want = if z >= m { 0.0 } else { m - z };
                    cases += 1;
                    if margin_ranking_loss(a, b, y, m) != want {
                        bad.push(format!("({a}, {b}, {y:?}, {m})"));
                    }
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{cases} cases, {} mismatches {:?}", bad.len(), bad.first()),
    )
}

fn random_sparse(rng: &mut ChaCha8Rng, dim: usize) -> SparseVec {
    let mut entries = Vec::new();
    for i in 0..dim as u32 {
        if rng.random_bool(0.15) {
            entries.push((i, rng.random_range(-1.0..1.0)));
        }
    }
    SparseVec(entries)
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dim = 64;
    let h = 1e-6;
    let (mut probes, mut worst) = (0, 0.0f64);
    while probes < 100 {
        let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (xa, xb) = (random_sparse(&mut rng, dim), random_sparse(&mut rng, dim));
        let y = if probes % 2 == 0 {
            Label::ALonger
        } else {
            Label::BLonger
        };
        let margin = 1.0;
        let z = y.sign() * (xa.dot(&w) - xb.dot(&w));
        if (z - margin).abs() < 1e-3 || z >= margin {
            // Keep every probe on the active side so it exercises the gradient.
            continue;
        }
        probes += 1;
        let g = pair_loss_grad(&w, &xa, &xb, y, margin);
        for i in 0..dim {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (pair_loss(&up, &xa, &xb, y, margin) - pair_loss(&down, &xa, &xb, y, margin))
                / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-12);
            if g[i] != 0.0 || fd.abs() > 1e-9 {
                worst = worst.max(rel);
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-5 && within(elapsed, 5),
        format!(
            "{probes} probes, worst relative error {worst:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn tau_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut mismatched = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=500usize);
        let kx = rng.random_range(2..=n as i32);
        let ky = rng.random_range(2..=n as i32);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..kx) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..ky) as f64).collect();
        match (kendall_tau_b(&x, &y).ok(), brute_tau_b(&x, &y)) {
            (Some(t), Some(b)) => worst = worst.max((t.tau_b - b).abs()),
            (None, None) => {}
            _ => mismatched += 1,
        }
    }
    let ramp: Vec<f64> = (0..500).map(f64::from).collect();
    let rev: Vec<f64> = ramp.iter().rev().copied().collect();
    let plus = kendall_tau_b(&ramp, &ramp).unwrap().tau_b;
    let minus = kendall_tau_b(&ramp, &rev).unwrap().tau_b;
    outcome(
        worst <= 1e-12 && mismatched == 0 && plus == 1.0 && minus == -1.0,
        format!("1000 vectors, max |diff| {worst:.1e}, perfect {plus}, reversed {minus}"),
    )
}

fn filter_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut total, mut violations) = (0usize, 0usize);
    for trial in 0..100 {
        let n = rng.random_range(2..=200);
        let lengths: Vec<u32> = (0..n).map(|_| rng.random_range(1..=1500)).collect();
        let records = records_with_lengths(&lengths);
        let delta = [0.0, 0.2, 0.25, 0.5][trial % 4];
        let allowed = brute_qualifying(&records, delta);
        let Ok(pairs) = build_pairs(&records, delta, 2000, trial as u64) else {
            violations += usize::from(!allowed.is_empty());
            continue;
        };
        for p in &pairs {
            total += 1;
            let ok = allowed.contains(&(p.a, p.b))
                && p.rel_diff >= delta
                && label_consistent(p, &records);
            violations += usize::from(!ok);
        }
    }
    outcome(
        violations == 0,
        format!("{total} pairs from 100 datasets, {violations} violations"),
    )
}

fn synth(n: usize, noise: f64, seed: u64, prefix: &str) -> Dataset {
    let cfg = SynthConfig {
        n,
        noise,
        id_prefix: prefix.into(),
        ..SynthConfig::default()
    };
    synthesize_dataset(&cfg, seed).unwrap()
}

fn held_out_tau(train_set: &[PromptRecord], test: &[PromptRecord], cfg: &TrainConfig) -> f64 {
    let model = train(train_set, cfg).unwrap();
    evaluate(&model, test).unwrap().tau_b
}

fn separable_learning() -> Outcome {
    let start = Instant::now();
    let all = synth(6000, 0.0, 50, "p");
    let (train_set, test) = all.records.split_at(5000);
    let tau = held_out_tau(train_set, test, &TrainConfig::default());
    let elapsed = start.elapsed();
    outcome(
        tau >= 0.95 && within(elapsed, 60),
        format!(
            "held-out tau_b {tau:.4} (>= 0.95), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

struct NoisyRuns {
    filtered: Vec<f64>,
    unfiltered: Vec<f64>,
    pointwise: Vec<f64>,
    listwise: Vec<f64>,
    pointwise_equal_budget: Vec<f64>,
    listwise_equal_budget: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn noisy_runs() -> NoisyRuns {
    let mut runs = NoisyRuns {
        filtered: vec![],
        unfiltered: vec![],
        pointwise: vec![],
        listwise: vec![],
        pointwise_equal_budget: vec![],
        listwise_equal_budget: vec![],
    };
    for seed in SEEDS {
        let all = synth(6000, 0.15, 100 + seed, "n");
        let (train_set, test) = all.records.split_at(5000);
        let base = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let pair_budget = base.examples_for(train_set.len());
        let with = |objective, delta, budget| TrainConfig {
            objective,
            delta,
            examples_per_epoch: budget,
            ..base.clone()
        };
        runs.filtered.push(held_out_tau(
            train_set,
            test,
            &with(Objective::Pairwise, 0.2, None),
        ));
        runs.unfiltered.push(held_out_tau(
            train_set,
            test,
            &with(Objective::Pairwise, 0.0, None),
        ));
        runs.pointwise.push(held_out_tau(
            train_set,
            test,
            &with(Objective::PointwiseL1, 0.2, None),
        ));
        runs.listwise.push(held_out_tau(
            train_set,
            test,
            &with(Objective::ListwiseListmle, 0.2, None),
        ));
        runs.pointwise_equal_budget.push(held_out_tau(
            train_set,
            test,
            &with(Objective::PointwiseL1, 0.2, Some(pair_budget)),
        ));
        runs.listwise_equal_budget.push(held_out_tau(
            train_set,
            test,
            &with(Objective::ListwiseListmle, 0.2, Some(pair_budget)),
        ));
    }
    runs
}

fn filtering_ablation(runs: &NoisyRuns) -> Outcome {
    let (f, u) = (mean(&runs.filtered), mean(&runs.unfiltered));
    outcome(
        f >= u,
        format!(
            "mean tau_b delta=0.2: {f:.4}, delta=0: {u:.4} over {} seeds",
            SEEDS.len()
        ),
    )
}

fn objective_ordering(runs: &NoisyRuns) -> Outcome {
    let (pair, point, list) = (
        mean(&runs.filtered),
        mean(&runs.pointwise),
        mean(&runs.listwise),
    );
    outcome(
        pair >= list && pair >= point,
        format!(
            "mean tau_b pairwise {pair:.4}, listwise {list:.4}, pointwise {point:.4}; \
             at the pairwise example budget: listwise {:.4}, pointwise {:.4}",
            mean(&runs.listwise_equal_budget),
            mean(&runs.pointwise_equal_budget)
        ),
    )
}

fn sjf_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = 0;
    let trials = 30;
    for trial in 0..trials {
        let n = 2 + trial % 7;
        let lengths: Vec<u32> = (0..n).map(|_| rng.random_range(1..64)).collect();
        let ds = dataset(&lengths);
        let mut cfg = SimConfig::new(Policy::oracle(&ds.records));
        cfg.cost = dyadic_cost();
        cfg.policy.batch_limit = 1;
        let sim = run(&burst(&ds), &ds, &cfg).unwrap();
        failures += usize::from(
            sim.mean_completion_time() != brute_min_mean_completion(&lengths, &cfg.cost),
        );
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && within(elapsed, 10),
        format!(
            "{trials} workloads (n <= 8), {failures} mismatches, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn pars_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut differing = 0;
    let workloads = 25;
    for id in 0..workloads {
        let n = rng.random_range(10..200);
        let lengths: Vec<u32> = (0..n).map(|_| rng.random_range(1..400)).collect();
        let ds = dataset(&lengths);
        let rate = rng.random_range(10.0..500.0);
        let trace = generate_arrivals(&ds.records, ArrivalMode::Poisson { rate }, id).unwrap();
        let mut cfg = SimConfig::new(Policy::fcfs());
        cfg.policy.batch_limit = rng.random_range(1..33);
        cfg.policy.starvation_threshold = rng.random_range(0.1..5.0);
        cfg.record_events = true;
        let oracle = run(&trace, &ds, &cfg.with_policy(Policy::oracle(&ds.records))).unwrap();
        let scorer = Arc::new(OracleScorer::from_dataset(&ds));
        let pars = run(&trace, &ds, &cfg.with_policy(Policy::pars(scorer))).unwrap();
        differing += usize::from(pars.events != oracle.events);
    }
    outcome(
        differing == 0,
        format!("{workloads} workloads, {differing} event logs differ"),
    )
}

fn hol_blocking() -> Outcome {
    let start = Instant::now();
    let train_set = synth(5000, 0.15, 200, "t");
    let burst_set = synth(500, 0.15, 201, "b");
    let model = Arc::new(train(&train_set.records, &TrainConfig::default()).unwrap());
    let tau = evaluate(model.as_ref(), &burst_set.records).unwrap().tau_b;

    let mut lens: Vec<f64> = burst_set
        .records
        .iter()
        .map(|r| r.output_len as f64)
        .collect();
    lens.sort_by(f64::total_cmp);
    let tail = nearest_rank(&lens, 99) / nearest_rank(&lens, 50);

    let trace = burst(&burst_set);
    let cfg = SimConfig::new(Policy::fcfs());
    let summary = |policy| {
        latency_summary(&run(&trace, &burst_set, &cfg.with_policy(policy)).unwrap()).unwrap()
    };
    let fcfs = summary(Policy::fcfs());
    let oracle = summary(Policy::oracle(&burst_set.records));
    let pars = summary(Policy::pars(model));
    let elapsed = start.elapsed();

    let oracle_ratio = oracle.mean_per_token_ms / fcfs.mean_per_token_ms;
    let pars_ratio = pars.mean_per_token_ms / fcfs.mean_per_token_ms;
    let p90_ordered = oracle.p90_per_token_ms <= pars.p90_per_token_ms
        && pars.p90_per_token_ms <= fcfs.p90_per_token_ms;
    outcome(
        tail >= 5.0 && tau >= 0.75 && oracle_ratio <= 0.5 && pars_ratio <= 0.67 && p90_ordered && within(elapsed, 60),
        format!(
            "p99/p50 {tail:.1}, predictor tau_b {tau:.3}; mean ms/token fcfs {:.2}, pars {:.2} ({pars_ratio:.3}x), \
             oracle {:.2} ({oracle_ratio:.3}x); p90 oracle {:.2} <= pars {:.2} <= fcfs {:.2}: {p90_ordered}; {:.1}s",
            fcfs.mean_per_token_ms,
            pars.mean_per_token_ms,
            oracle.mean_per_token_ms,
            oracle.p90_per_token_ms,
            pars.p90_per_token_ms,
            fcfs.p90_per_token_ms,
            elapsed.as_secs_f64()
        ),
    )
}

fn starvation_bound() -> Outcome {
    let threshold = 120.0;
    let cost = CostModel::default();
    let batch = 32;
    let mut worst_ratio = 0.0f64;
    let mut unboosted_worst = f64::INFINITY;
    let mut bound = 0.0;
    for seed in SEEDS {
        // Short requests at ~1.6x capacity plus rare long ones.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lengths: Vec<u32> = (0..12_000)
            .map(|_| {
                if rng.random_bool(0.002) {
                    1500
                } else {
                    rng.random_range(10..60)
                }
            })
            .collect();
        let ds = dataset(&lengths);
        let trace =
            generate_arrivals(&ds.records, ArrivalMode::Poisson { rate: 75.0 }, seed).unwrap();
        let l_max = lengths.iter().copied().max().unwrap() as f64;
        let p_max = ds.records.iter().map(|r| r.prompt_len).max().unwrap() as u64;
        bound = threshold
            + l_max * cost.iteration(batch, 0)
            + cost.t_prefill_token * (p_max * batch as u64) as f64;

        let mut cfg = SimConfig::new(Policy::oracle(&ds.records));
        cfg.policy.starvation_threshold = threshold;
        let worst = |cfg: &SimConfig| {
            run(&trace, &ds, cfg)
                .unwrap()
                .records
                .iter()
                .map(|r| r.wait())
                .fold(0.0, f64::max)
        };
        worst_ratio = worst_ratio.max(worst(&cfg) / bound);
        cfg.policy.starvation_threshold = 1e12;
        unboosted_worst = unboosted_worst.min(worst(&cfg));
    }
    outcome(
        worst_ratio <= 1.0,
        format!(
            "worst wait {:.1}s vs bound {bound:.1}s over {} seeds; without boosting >= {unboosted_worst:.1}s",
            worst_ratio * bound,
            SEEDS.len()
        ),
    )
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    common::cli::full_pipeline(a.path());
    common::cli::full_pipeline(b.path());
    let (sa, sb) = (
        common::cli::snapshot(a.path()),
        common::cli::snapshot(b.path()),
    );
    let differing: Vec<_> = sa
        .iter()
        .filter(|(p, bytes)| sb.get(*p) != Some(bytes))
        .map(|(p, _)| p.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && sa.len() == sb.len(),
        format!(
            "{} files compared across two runs, {} differ {:?}",
            sa.len(),
            differing.len(),
            differing
        ),
    )
}

#[test]
fn acceptance() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "loss exactness", loss_exactness()),
        (2, "gradient check", gradient_check()),
        (3, "tau_b oracle equivalence", tau_oracle()),
        (4, "pair filter soundness", filter_soundness()),
        (5, "separable-workload learning", separable_learning()),
    ];
    let runs = noisy_runs();
    results.push((6, "filtering ablation", filtering_ablation(&runs)));
    results.push((7, "objective ordering", objective_ordering(&runs)));
    results.push((8, "SJF optimality", sjf_optimality()));
    results.push((9, "PARS-Oracle equivalence", pars_oracle_equivalence()));
    results.push((10, "HOL-blocking reproduction", hol_blocking()));
    results.push((11, "starvation bound", starvation_bound()));
    results.push((12, "determinism", determinism()));

    // Written to the real stdout so the lines show without --nocapture.
    let mut out = std::io::stdout().lock();
    for (n, name, o) in &results {
        writeln!(
            out,
            "criterion {n:2} {:<28} {}  {}",
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        )
        .unwrap();
    }
    let failed: Vec<u32> = results
        .iter()
        .filter(|(_, _, o)| !o.pass)
        .map(|(n, _, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
