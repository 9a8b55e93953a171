use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::PromptRecord;

/// Candidate draws allowed per requested pair before sampling gives up.
pub const DRAW_BUDGET_FACTOR: usize = 50;

/// Which prompt of a pair has the longer response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    /// `a` is longer (y = +1).
    ALonger,
    /// `b` is longer (y = -1).
    BLonger,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::ALonger => 1.0,
            Label::BLonger => -1.0,
        }
    }

    /// Label for lengths `(a, b)`; `None` for exact ties.
    pub fn from_lengths(a: u32, b: u32) -> Option<Label> {
        match a.cmp(&b) {
            std::cmp::Ordering::Greater => Some(Label::ALonger),
            std::cmp::Ordering::Less => Some(Label::BLonger),
            std::cmp::Ordering::Equal => None,
        }
    }
}

/// A filtered, labeled training pair. `a` and `b` index into the record
/// slice the pair was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub a: usize,
    pub b: usize,
    pub y: Label,
    pub rel_diff: f64,
}

/// Relative length gap `|a - b| / max(a, b)`.
pub fn min_length_difference(a: u32, b: u32) -> f64 {
    let hi = a.max(b);
    if hi == 0 {
        return 0.0;
    }
    a.abs_diff(b) as f64 / hi as f64
}

/// Whether a pair of lengths is informative enough to train on.
pub fn qualifies(a: u32, b: u32, delta: f64) -> bool {
    a != b && min_length_difference(a, b) >= delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairStats {
    pub draws: usize,
    pub kept: usize,
}

/// Samples up to `max_pairs` qualifying pairs uniformly (with replacement)
/// from all ordered pairs of distinct records.
pub fn build_pairs(
    records: &[PromptRecord],
    delta: f64,
    max_pairs: usize,
    seed: u64,
) -> Result<Vec<RankedPair>> {
    build_pairs_with_stats(records, delta, max_pairs, seed).map(|(pairs, _)| pairs)
}

pub fn build_pairs_with_stats(
    records: &[PromptRecord],
    delta: f64,
    max_pairs: usize,
    seed: u64,
) -> Result<(Vec<RankedPair>, PairStats)> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidConfig(format!(
            "delta must be in [0, 1) (got {delta})"
        )));
    }
    let n = records.len();
    let budget = max_pairs.saturating_mul(DRAW_BUDGET_FACTOR);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(max_pairs.min(budget));
    let mut draws = 0;
    if n >= 2 {
        while pairs.len() < max_pairs && draws < budget {
            draws += 1;
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let (la, lb) = (records[a].output_len, records[b].output_len);
            if !qualifies(la, lb, delta) {
                continue;
            }
            pairs.push(RankedPair {
                a,
                b,
                y: Label::from_lengths(la, lb).expect("ties filtered above"),
                rel_diff: min_length_difference(la, lb),
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoInformativePairs {
            delta,
            attempts: draws,
        });
    }
    let kept = pairs.len();
    Ok((pairs, PairStats { draws, kept }))
}
