//! Evaluation formulas: Kendall tau-b, per-token latency statistics,
//! run-to-run length variance and speedups.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::SimResult;

/// Pair counts behind a tau-b value. Pairs tied in both inputs are counted
/// in `n_1`, `n_2` and `n_3`, and in neither `n_c` nor `n_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    pub tau_b: f64,
    pub n_c: u64,
    pub n_d: u64,
    /// n (n - 1) / 2
    pub n_0: u64,
    /// Pairs tied in the first input.
    pub n_1: u64,
    /// Pairs tied in the second input.
    pub n_2: u64,
    /// Pairs tied in both.
    pub n_3: u64,
}

impl TauResult {
    /// Applies `tau_b = (n_c - n_d) / sqrt((n_0 - n_1)(n_0 - n_2))`.
    pub fn from_counts(n_c: u64, n_d: u64, n_0: u64, n_1: u64, n_2: u64, n_3: u64) -> Result<Self> {
        let (a, b) = (n_0 - n_1, n_0 - n_2);
        if a == 0 || b == 0 {
            return Err(Error::DegenerateRanking);
        }
        let denom = if a == b {
            a as f64
        } else {
            (a as f64).sqrt() * (b as f64).sqrt()
        };
        let tau_b = ((n_c as f64 - n_d as f64) / denom).clamp(-1.0, 1.0);
        Ok(TauResult {
            tau_b,
            n_c,
            n_d,
            n_0,
            n_1,
            n_2,
            n_3,
        })
    }
}

/// Kendall tau-b with tie correction in O(n log n) (Knight's algorithm).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<TauResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "kendall tau-b needs equal lengths ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(
            "kendall tau-b needs at least 2 values".into(),
        ));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("kendall tau-b got NaN".into()));
    }
    // Fold -0.0 into 0.0 so equality and ordering agree.
    let x: Vec<f64> = x.iter().map(|v| v + 0.0).collect();
    let y: Vec<f64> = y.iter().map(|v| v + 0.0).collect();
    let n = x.len() as u64;
    let n_0 = n * (n - 1) / 2;

    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(y[i].total_cmp(&y[j])));

    let n_1 = tied_pairs(&idx, |i, j| x[i] == x[j]);
    let n_3 = tied_pairs(&idx, |i, j| x[i] == x[j] && y[i] == y[j]);

    // Inversions in y of the x-sorted order are exactly the discordant pairs.
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; ys.len()];
    let n_d = merge_count(&mut ys, &mut buf);

    let sorted_y: Vec<usize> = (0..ys.len()).collect();
    let n_2 = tied_pairs(&sorted_y, |i, j| ys[i] == ys[j]);

    let n_c = n_0 + n_3 - n_1 - n_2 - n_d;
    TauResult::from_counts(n_c, n_d, n_0, n_1, n_2, n_3)
}

/// Sum of t(t-1)/2 over runs of consecutive equal items.
fn tied_pairs(order: &[usize], same: impl Fn(usize, usize) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in order.windows(2) {
        if same(w[0], w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Stable merge sort counting strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (lo, hi) = v.split_at_mut(mid);
        let (blo, bhi) = buf.split_at_mut(mid);
        merge_count(lo, blo) + merge_count(hi, bhi)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean_per_token_ms: f64,
    pub p90_per_token_ms: f64,
}

/// Nearest-rank percentile of an ascending slice: the `ceil(pct/100 * n)`-th value.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> f64 {
    assert!(!sorted.is_empty() && pct <= 100);
    let n = sorted.len();
    let rank = ((pct as usize * n).div_ceil(100)).max(1);
    sorted[rank - 1]
}

/// Mean and p90 of per-request per-token latencies given in milliseconds.
pub fn summarize_per_token_ms(values_ms: &[f64]) -> Result<LatencySummary> {
    if values_ms.is_empty() {
        return Err(Error::InvalidInput(
            "latency summary of an empty result".into(),
        ));
    }
    let mut sorted = values_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(LatencySummary {
        count: values_ms.len(),
        mean_per_token_ms: values_ms.iter().sum::<f64>() / values_ms.len() as f64,
        p90_per_token_ms: nearest_rank(&sorted, 90),
    })
}

pub fn latency_summary(result: &SimResult) -> Result<LatencySummary> {
    let ms: Vec<f64> = result
        .records
        .iter()
        .map(|r| r.per_token_latency * 1000.0)
        .collect();
    summarize_per_token_ms(&ms)
}

/// `(max / min - 1) * 100` over repeated-run output lengths.
pub fn relative_variance(samples: &[u32]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(
            "relative variance needs >= 2 samples".into(),
        ));
    }
    if samples.iter().any(|&s| s < 1) {
        return Err(Error::InvalidInput("output lengths must be >= 1".into()));
    }
    let max = *samples.iter().max().expect("nonempty") as f64;
    let min = *samples.iter().min().expect("nonempty") as f64;
    Ok((max / min - 1.0) * 100.0)
}

/// How many times faster `latency` is than `baseline`.
pub fn speedup(baseline: f64, latency: f64) -> f64 {
    baseline / latency
}
