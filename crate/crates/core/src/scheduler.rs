//! Waiting-queue ordering policies.
//!
//! Every policy reduces to a per-request key cached at enqueue time: the
//! arrival time for FCFS, a predicted (or true) length score for the SJF
//! variants. Admission picks the lowest keys first, except that requests
//! which have waited past the starvation threshold are boosted and go ahead
//! of everything else in arrival order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{OracleScorer, Scorer};
use crate::workload::PromptRecord;

pub const DEFAULT_STARVATION_THRESHOLD_S: f64 = 120.0;
pub const DEFAULT_BATCH_LIMIT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Fcfs,
    /// SJF on a pointwise (L1 regression) predictor.
    Pointwise,
    /// SJF on a listwise (ListMLE) predictor.
    Listwise,
    /// SJF on ground-truth lengths.
    Oracle,
    /// SJF on the pairwise margin-ranking predictor.
    Pars,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Fcfs,
        PolicyKind::Pointwise,
        PolicyKind::Listwise,
        PolicyKind::Oracle,
        PolicyKind::Pars,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fcfs => "fcfs",
            PolicyKind::Pointwise => "pointwise",
            PolicyKind::Listwise => "listwise",
            PolicyKind::Oracle => "oracle",
            PolicyKind::Pars => "pars",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown policy {s:?} (fcfs, pointwise, listwise, oracle, pars)"
                ))
            })
    }
}

/// A policy kind plus the scorer it ranks with (none for FCFS).
#[derive(Clone)]
pub struct Policy {
    kind: PolicyKind,
    scorer: Option<Arc<dyn Scorer>>,
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Policy")
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

impl Policy {
    pub fn fcfs() -> Self {
        Policy {
            kind: PolicyKind::Fcfs,
            scorer: None,
        }
    }

    pub fn oracle(records: &[PromptRecord]) -> Self {
        Self::with_scorer(PolicyKind::Oracle, Arc::new(OracleScorer::new(records)))
    }

    pub fn pars(scorer: Arc<dyn Scorer>) -> Self {
        Self::with_scorer(PolicyKind::Pars, scorer)
    }

    pub fn pointwise(scorer: Arc<dyn Scorer>) -> Self {
        Self::with_scorer(PolicyKind::Pointwise, scorer)
    }

    pub fn listwise(scorer: Arc<dyn Scorer>) -> Self {
        Self::with_scorer(PolicyKind::Listwise, scorer)
    }

    /// Any SJF kind with an explicit scorer. For [`PolicyKind::Fcfs`] the
    /// scorer is ignored.
    pub fn with_scorer(kind: PolicyKind, scorer: Arc<dyn Scorer>) -> Self {
        Policy {
            kind,
            scorer: (kind != PolicyKind::Fcfs).then_some(scorer),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// The ordering key cached for a request at enqueue.
    pub fn key(&self, record: &PromptRecord, arrival_time: f64) -> Result<f64> {
        match &self.scorer {
            None => Ok(arrival_time),
            Some(s) => {
                let score = s.score(record)?;
                if score.is_nan() {
                    return Err(Error::InvalidInput(format!(
                        "scorer returned NaN for {}",
                        record.id
                    )));
                }
                Ok(score)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub policy: Policy,
    /// Seconds a request may wait before it is boosted.
    pub starvation_threshold: f64,
    /// Maximum concurrently running requests.
    pub batch_limit: usize,
}

impl PolicyConfig {
    pub fn new(policy: Policy) -> Self {
        PolicyConfig {
            policy,
            starvation_threshold: DEFAULT_STARVATION_THRESHOLD_S,
            batch_limit: DEFAULT_BATCH_LIMIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.starvation_threshold.is_nan() || self.starvation_threshold <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "starvation threshold must be > 0 (got {})",
                self.starvation_threshold
            )));
        }
        if self.batch_limit < 1 {
            return Err(Error::InvalidConfig("batch_limit must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestState {
    Waiting,
    Running,
    Finished,
}

/// A prompt instance in flight.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    /// Position in the arrival trace; last-resort tie-break.
    pub seq: usize,
    pub prompt_id: String,
    pub arrival_time: f64,
    pub output_len: u32,
    pub prompt_len: u32,
    pub state: RequestState,
    pub tokens_generated: u32,
    pub score: f64,
    pub boosted: bool,
    pub admit_time: Option<f64>,
    pub finish_time: Option<f64>,
}

impl Request {
    pub fn new(seq: usize, record: &PromptRecord, arrival_time: f64) -> Self {
        Request {
            seq,
            prompt_id: record.id.clone(),
            arrival_time,
            output_len: record.output_len,
            prompt_len: record.prompt_len,
            state: RequestState::Waiting,
            tokens_generated: 0,
            score: 0.0,
            boosted: false,
            admit_time: None,
            finish_time: None,
        }
    }

    pub fn wait_exceeds(&self, now: f64, threshold: f64) -> bool {
        now - self.arrival_time > threshold
    }

    pub fn admit(&mut self, now: f64) {
        assert_eq!(
            self.state,
            RequestState::Waiting,
            "{} admitted twice",
            self.prompt_id
        );
        self.state = RequestState::Running;
        self.admit_time = Some(now);
    }

    /// Generates one token; returns true when the response is complete.
    pub fn step(&mut self) -> bool {
        assert_eq!(self.state, RequestState::Running);
        self.tokens_generated += 1;
        self.tokens_generated >= self.output_len
    }

    pub fn finish(&mut self, now: f64) {
        assert_eq!(self.state, RequestState::Running);
        assert_eq!(self.tokens_generated, self.output_len);
        self.state = RequestState::Finished;
        self.finish_time = Some(now);
    }
}

/// Caches the policy's ordering key on a waiting request.
pub fn enqueue(mut request: Request, record: &PromptRecord, policy: &Policy) -> Result<Request> {
    if request.state != RequestState::Waiting {
        return Err(Error::InvalidInput(format!(
            "{} enqueued in state {:?}",
            request.prompt_id, request.state
        )));
    }
    request.score = policy.key(record, request.arrival_time)?;
    Ok(request)
}

fn tie_break(a: &Request, b: &Request) -> Ordering {
    a.arrival_time
        .total_cmp(&b.arrival_time)
        .then_with(|| a.prompt_id.cmp(&b.prompt_id))
        .then_with(|| a.seq.cmp(&b.seq))
}

/// Total admission order: boosted first (FIFO), then ascending key.
pub fn admission_order(a: &Request, a_boosted: bool, b: &Request, b_boosted: bool) -> Ordering {
    match (a_boosted, b_boosted) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (true, true) => tie_break(a, b),
        (false, false) => a.score.total_cmp(&b.score).then_with(|| tie_break(a, b)),
    }
}

/// Picks up to `free_slots` requests to admit, returned as indices into
/// `waiting` in admission order. A request counts as boosted if its flag is
/// set or its wait already exceeds the threshold.
pub fn select_batch(
    waiting: &[Request],
    now: f64,
    free_slots: usize,
    config: &PolicyConfig,
) -> Vec<usize> {
    if free_slots == 0 || waiting.is_empty() {
        return Vec::new();
    }
    let boosted: Vec<bool> = waiting
        .iter()
        .map(|r| r.boosted || r.wait_exceeds(now, config.starvation_threshold))
        .collect();
    let mut order: Vec<usize> = (0..waiting.len()).collect();
    let cmp =
        |&i: &usize, &j: &usize| admission_order(&waiting[i], boosted[i], &waiting[j], boosted[j]);
    if free_slots < order.len() {
        order.select_nth_unstable_by(free_slots - 1, cmp);
        order.truncate(free_slots);
    }
    order.sort_unstable_by(cmp);
    order
}

/// Boosts every request whose wait exceeds `threshold`; returns the indices
/// of the newly boosted ones.
pub fn boost_waiting(waiting: &mut [Request], now: f64, threshold: f64) -> Vec<usize> {
    let mut newly = Vec::new();
    for (i, r) in waiting.iter_mut().enumerate() {
        if !r.boosted && r.wait_exceeds(now, threshold) {
            r.boosted = true;
            newly.push(i);
        }
    }
    newly
}

/// Count-returning form of [`boost_waiting`].
pub fn update_boosts(waiting: &mut [Request], now: f64, threshold: f64) -> usize {
    boost_waiting(waiting, now, threshold).len()
}
