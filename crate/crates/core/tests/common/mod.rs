//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use pars::predictor::{Label, RankedPair};
use pars::simulator::CostModel;
use pars::workload::{ArrivalMode, ArrivalTrace, Dataset, PromptRecord, TraceEntry};

/// O(n^2) tau-b straight from the pair definitions.
pub fn brute_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut nc, mut nd, mut n1, mut n2) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                n1 += 1;
            }
            if dy == 0.0 {
                n2 += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    nc += 1;
                } else {
                    nd += 1;
                }
            }
        }
    }
    let n0 = (n * n.saturating_sub(1) / 2) as i64;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    (denom > 0.0).then(|| (nc - nd) as f64 / denom)
}

/// Every ordered pair (a, b), a != b, that passes the relative-gap filter.
pub fn brute_qualifying(records: &[PromptRecord], delta: f64) -> BTreeSet<(usize, usize)> {
    let mut set = BTreeSet::new();
    for a in 0..records.len() {
        for b in 0..records.len() {
            let (la, lb) = (records[a].output_len as f64, records[b].output_len as f64);
            if a == b || la == lb {
                continue;
            }
            if (la - lb).abs() / la.max(lb) >= delta {
                set.insert((a, b));
            }
        }
    }
    set
}

pub fn label_consistent(pair: &RankedPair, records: &[PromptRecord]) -> bool {
    let diff = records[pair.a].output_len as f64 - records[pair.b].output_len as f64;
    pair.y.sign() * diff > 0.0
        && Label::from_lengths(records[pair.a].output_len, records[pair.b].output_len)
            == Some(pair.y)
}

pub fn records_with_lengths(lengths: &[u32]) -> Vec<PromptRecord> {
    lengths
        .iter()
        .enumerate()
        .map(|(i, &l)| PromptRecord::new(format!("r{i:03}"), format!("prompt number {i}"), l))
        .collect()
}

pub fn dataset(lengths: &[u32]) -> Dataset {
    Dataset::new(records_with_lengths(lengths)).unwrap()
}

pub fn burst(dataset: &Dataset) -> ArrivalTrace {
    timed(dataset, &vec![0.0; dataset.len()])
}

/// Trace with the given arrival times (must be non-decreasing).
pub fn timed(dataset: &Dataset, arrivals: &[f64]) -> ArrivalTrace {
    let all_zero = arrivals.iter().all(|&t| t == 0.0);
    ArrivalTrace {
        entries: dataset
            .records
            .iter()
            .zip(arrivals)
            .map(|(r, &t)| TraceEntry {
                prompt_id: r.id.clone(),
                arrival_time: t,
            })
            .collect(),
        seed: 0,
        mode: if all_zero {
            ArrivalMode::Burst
        } else {
            ArrivalMode::Poisson { rate: 1.0 }
        },
    }
}

/// Costs that keep every simulated time a small dyadic rational, so the
/// engine and the references agree bit for bit.
pub fn dyadic_cost() -> CostModel {
    CostModel {
        t_base: 0.25,
        t_decode: 0.5,
        t_prefill_token: 0.0,
    }
}

/// Completion times of a single server serving `order` back to back from
/// t = 0, one token per iteration.
pub fn serial_completions(lengths: &[u32], order: &[usize], cost: &CostModel) -> Vec<f64> {
    let mut done = vec![0.0; lengths.len()];
    let mut now = 0.0;
    for &i in order {
        for _ in 0..lengths[i] {
            now += cost.iteration(1, 0);
        }
        done[i] = now;
    }
    done
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Minimum mean completion time over all n! service orders.
pub fn brute_min_mean_completion(lengths: &[u32], cost: &CostModel) -> f64 {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    let mut best = f64::INFINITY;
    permute(&mut order, 0, &mut |o| {
        best = best.min(mean(&serial_completions(lengths, o, cost)));
    });
    best
}

fn permute(v: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}

pub mod cli {
    use std::collections::BTreeMap;
    use std::fs;
    use std::path::{Path, PathBuf};
    use std::process::{Command, Output};

    pub fn pars(dir: &Path, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_pars"))
            .current_dir(dir)
            .args(args)
            .output()
            .expect("binary runs")
    }

    pub fn pars_ok(dir: &Path, args: &[&str]) -> String {
        let out = pars(dir, args);
        assert!(
            out.status.success(),
            "pars {args:?} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    /// Every CLI command once, all paths relative to `dir`.
    pub fn full_pipeline(dir: &Path) {
        pars_ok(
            dir,
            &[
                "gen-workload",
                "--out",
                "w",
                "--n",
                "400",
                "--noise",
                "0.1",
                "--seed",
                "5",
            ],
        );
        pars_ok(
            dir,
            &[
                "gen-workload",
                "--out",
                "w2",
                "--n",
                "200",
                "--arrivals",
                "poisson:50",
                "--seed",
                "6",
            ],
        );
        pars_ok(
            dir,
            &[
                "train",
                "--data",
                "w/dataset.jsonl",
                "--out",
                "m/pars.json",
                "--epochs",
                "2",
                "--examples-per-epoch",
                "20000",
                "--dim",
                "512",
                "--seed",
                "1",
            ],
        );
        pars_ok(
            dir,
            &[
                "train",
                "--data",
                "w/dataset.jsonl",
                "--out",
                "m/point.json",
                "--objective",
                "pointwise_l1",
                "--epochs",
                "2",
                "--dim",
                "512",
                "--seed",
                "1",
            ],
        );
        pars_ok(
            dir,
            &[
                "eval-predictor",
                "--data",
                "w/dataset.jsonl",
                "--model",
                "m/pars.json",
                "--model",
                "m/point.json",
                "--oracle",
                "--out",
                "eval",
            ],
        );
        pars_ok(
            dir,
            &[
                "simulate",
                "--data",
                "w2/dataset.jsonl",
                "--trace",
                "w2/trace.txt",
                "--policy",
                "pars",
                "--model",
                "m/pars.json",
                "--event-log",
                "--out",
                "sim",
            ],
        );
        pars_ok(
            dir,
            &[
                "compare",
                "--data",
                "w/dataset.jsonl",
                "--policies",
                "fcfs,oracle,pars,pointwise",
                "--pars-model",
                "m/pars.json",
                "--pointwise-model",
                "m/point.json",
                "--burst",
                "150",
                "--out",
                "cmp",
            ],
        );
        pars_ok(
            dir,
            &[
                "compare",
                "--data",
                "w2/dataset.jsonl",
                "--arrivals",
                "poisson:40",
                "--rate-multipliers",
                "0.5,2",
                "--seeds",
                "1,2",
                "--policies",
                "fcfs,oracle",
                "--event-log",
                "--out",
                "sweep",
            ],
        );
    }

    /// Relative path -> contents for every file under `root`.
    pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
        let mut files = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.insert(
                        path.strip_prefix(root).unwrap().to_path_buf(),
                        fs::read(&path).unwrap(),
                    );
                }
            }
        }
        files
    }
}
