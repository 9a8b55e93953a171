//! Discrete-event model of an LLM serving engine.
//!
//! Time advances one decode iteration at a time. An iteration lasts
//! `t_base + t_decode * |running| + t_prefill_token * (prompt tokens admitted
//! at its start)` and produces one token for every running request. The
//! scheduler is consulted at iteration boundaries (continuous batching) or
//! only between whole batches (static batching).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{latency_summary, speedup, LatencySummary};
use crate::scheduler::{
    boost_waiting, enqueue, select_batch, Policy, PolicyConfig, PolicyKind, Request,
};
use crate::workload::{ArrivalTrace, Dataset, PromptRecord};

/// Iteration cost constants, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub t_base: f64,
    pub t_decode: f64,
    pub t_prefill_token: f64,
}

impl Default for CostModel {
    /// Desk-scale constants (2 ms + 0.5 ms per running request, 0.1 ms per
    /// prompt token); not measured on any particular hardware.
    fn default() -> Self {
        CostModel {
            t_base: 0.002,
            t_decode: 0.0005,
            t_prefill_token: 0.0001,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.t_base) && ok(self.t_decode) && ok(self.t_prefill_token)) {
            return Err(Error::InvalidConfig(
                "cost constants must be finite and >= 0".into(),
            ));
        }
        if self.t_decode <= 0.0 {
            return Err(Error::InvalidConfig("t_decode must be > 0".into()));
        }
        Ok(())
    }

    pub fn iteration(&self, running: usize, prefill_tokens: u64) -> f64 {
        self.t_base + self.t_decode * running as f64 + self.t_prefill_token * prefill_tokens as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Batching {
    Continuous,
    /// Batches start once `batch_limit` requests wait or the oldest has
    /// waited `max_wait` seconds, and run to completion.
    Static {
        max_wait: f64,
    },
}

impl fmt::Display for Batching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Batching::Continuous => write!(f, "continuous"),
            Batching::Static { max_wait } => write!(f, "static:{max_wait}"),
        }
    }
}

impl FromStr for Batching {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "continuous" {
            return Ok(Batching::Continuous);
        }
        s.strip_prefix("static:")
            .and_then(|w| w.parse::<f64>().ok())
            .filter(|w| *w >= 0.0 && w.is_finite())
            .map(|max_wait| Batching::Static { max_wait })
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "{s:?}: expected `continuous` or `static:MAX_WAIT_S` with MAX_WAIT_S >= 0"
                ))
            })
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub cost: CostModel,
    pub batching: Batching,
    pub policy: PolicyConfig,
    /// Recorded for provenance; the engine itself draws no random numbers.
    pub seed: u64,
    pub record_events: bool,
}

impl SimConfig {
    pub fn new(policy: Policy) -> Self {
        SimConfig {
            cost: CostModel::default(),
            batching: Batching::Continuous,
            policy: PolicyConfig::new(policy),
            seed: 0,
            record_events: false,
        }
    }

    pub fn batch_limit(&self) -> usize {
        self.policy.batch_limit
    }

    pub fn with_policy(&self, policy: Policy) -> Self {
        let mut cfg = self.clone();
        cfg.policy.policy = policy;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        self.policy.validate()?;
        if let Batching::Static { max_wait } = self.batching {
            if !(max_wait >= 0.0 && max_wait.is_finite()) {
                return Err(Error::InvalidConfig("static max_wait must be >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Arrive { t: f64, id: String },
    Boost { t: f64, id: String },
    Admit { t: f64, id: String },
    Finish { t: f64, id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_id: String,
    pub arrival: f64,
    pub admit: f64,
    pub finish: f64,
    pub output_len: u32,
    /// Seconds per output token, `(finish - arrival) / output_len`.
    pub per_token_latency: f64,
}

impl CompletionRecord {
    pub fn latency(&self) -> f64 {
        self.finish - self.arrival
    }

    pub fn wait(&self) -> f64 {
        self.admit - self.arrival
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub policy: String,
    /// One record per trace entry, in trace order.
    pub records: Vec<CompletionRecord>,
    pub iterations: u64,
    /// Simulated time at which the last request finished.
    pub makespan: f64,
    /// Empty unless `record_events` was set.
    pub events: Vec<Event>,
    pub max_running: usize,
}

impl SimResult {
    pub fn mean_completion_time(&self) -> f64 {
        self.records
            .iter()
            .map(CompletionRecord::latency)
            .sum::<f64>()
            / self.records.len() as f64
    }
}

struct Engine<'a> {
    config: &'a SimConfig,
    trace: &'a ArrivalTrace,
    prompts: Vec<&'a PromptRecord>,
    next_arrival: usize,
    waiting: Vec<Request>,
    running: Vec<Request>,
    done: Vec<Option<CompletionRecord>>,
    events: Vec<Event>,
    now: f64,
    iterations: u64,
    max_running: usize,
}

impl<'a> Engine<'a> {
    fn log(&mut self, event: impl FnOnce() -> Event) {
        if self.config.record_events {
            self.events.push(event());
        }
    }

    fn next_arrival_time(&self) -> Option<f64> {
        self.trace
            .entries
            .get(self.next_arrival)
            .map(|e| e.arrival_time)
    }

    fn take_arrivals(&mut self) -> Result<()> {
        while let Some(t) = self.next_arrival_time().filter(|&t| t <= self.now) {
            let seq = self.next_arrival;
            let record = self.prompts[seq];
            let request = enqueue(
                Request::new(seq, record, t),
                record,
                &self.config.policy.policy,
            )?;
            self.log(|| Event::Arrive {
                t,
                id: record.id.clone(),
            });
            self.waiting.push(request);
            self.next_arrival += 1;
        }
        Ok(())
    }

    fn boost(&mut self) {
        let now = self.now;
        for i in boost_waiting(
            &mut self.waiting,
            now,
            self.config.policy.starvation_threshold,
        ) {
            let id = self.waiting[i].prompt_id.clone();
            self.log(|| Event::Boost { t: now, id });
        }
    }

    /// Moves the selected waiting requests into the running set and returns
    /// the prompt tokens to prefill.
    fn admit(&mut self, free_slots: usize) -> u64 {
        let picked = select_batch(&self.waiting, self.now, free_slots, &self.config.policy);
        if picked.is_empty() {
            return 0;
        }
        let mut taken: Vec<Option<Request>> = self.waiting.drain(..).map(Some).collect();
        let mut prefill = 0u64;
        for &i in &picked {
            let mut r = taken[i].take().expect("selected once");
            r.admit(self.now);
            prefill += r.prompt_len as u64;
            let (t, id) = (self.now, r.prompt_id.clone());
            self.log(|| Event::Admit { t, id });
            self.running.push(r);
        }
        self.waiting = taken.into_iter().flatten().collect();
        self.max_running = self.max_running.max(self.running.len());
        prefill
    }

    /// Runs one decode iteration and retires finished requests.
    fn iterate(&mut self, prefill_tokens: u64) {
        debug_assert!(!self.running.is_empty());
        self.now += self
            .config
            .cost
            .iteration(self.running.len(), prefill_tokens);
        self.iterations += 1;
        let now = self.now;
        let mut still = Vec::with_capacity(self.running.len());
        for mut r in std::mem::take(&mut self.running) {
            if r.step() {
                r.finish(now);
                self.log(|| Event::Finish {
                    t: now,
                    id: r.prompt_id.clone(),
                });
                let admit = r.admit_time.expect("admitted");
                self.done[r.seq] = Some(CompletionRecord {
                    per_token_latency: (now - r.arrival_time) / r.output_len as f64,
                    prompt_id: r.prompt_id,
                    arrival: r.arrival_time,
                    admit,
                    finish: now,
                    output_len: r.output_len,
                });
            } else {
                still.push(r);
            }
        }
        self.running = still;
    }

    fn run_continuous(&mut self) -> Result<()> {
        let limit = self.config.batch_limit();
        loop {
            self.take_arrivals()?;
            self.boost();
            if self.running.is_empty() && self.waiting.is_empty() {
                match self.next_arrival_time() {
                    Some(t) => {
                        self.now = self.now.max(t);
                        continue;
                    }
                    None => return Ok(()),
                }
            }
            let prefill = self.admit(limit - self.running.len());
            self.iterate(prefill);
        }
    }

    fn run_static(&mut self, max_wait: f64) -> Result<()> {
        let limit = self.config.batch_limit();
        loop {
            self.take_arrivals()?;
            self.boost();
            if self.waiting.is_empty() {
                match self.next_arrival_time() {
                    Some(t) => {
                        self.now = self.now.max(t);
                        continue;
                    }
                    None => return Ok(()),
                }
            }
            let oldest = self
                .waiting
                .iter()
                .map(|r| r.arrival_time)
                .fold(f64::INFINITY, f64::min);
            let deadline = oldest + max_wait;
            if self.waiting.len() < limit && self.now < deadline {
                self.now = match self.next_arrival_time() {
                    Some(t) if t < deadline => t,
                    _ => deadline,
                };
                continue;
            }
            let mut prefill = self.admit(limit);
            while !self.running.is_empty() {
                self.iterate(prefill);
                prefill = 0;
            }
        }
    }
}

/// Simulates `trace` under `config`. Deterministic in its inputs.
pub fn run(trace: &ArrivalTrace, dataset: &Dataset, config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    trace.validate()?;
    let index: HashMap<&str, &PromptRecord> = dataset.index();
    let prompts = trace
        .entries
        .iter()
        .map(|e| {
            index
                .get(e.prompt_id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownPrompt(e.prompt_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut engine = Engine {
        config,
        trace,
        prompts,
        next_arrival: 0,
        waiting: Vec::new(),
        running: Vec::new(),
        done: vec![None; trace.len()],
        events: Vec::new(),
        now: 0.0,
        iterations: 0,
        max_running: 0,
    };
    match config.batching {
        Batching::Continuous => engine.run_continuous()?,
        Batching::Static { max_wait } => engine.run_static(max_wait)?,
    }

    let records: Vec<CompletionRecord> = engine
        .done
        .into_iter()
        .map(|r| r.expect("every request finishes"))
        .collect();
    let makespan = records.iter().map(|r| r.finish).fold(0.0, f64::max);
    Ok(SimResult {
        policy: config.policy.policy.name().to_string(),
        records,
        iterations: engine.iterations,
        makespan,
        events: engine.events,
        max_running: engine.max_running,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub policy: String,
    pub n_requests: usize,
    pub mean_per_token_ms: f64,
    pub p90_per_token_ms: f64,
    /// FCFS mean latency over this policy's; absent without an FCFS run.
    pub speedup_vs_fcfs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_b: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<PolicyRow>,
    pub results: Vec<SimResult>,
}

impl Comparison {
    pub fn row(&self, policy: &str) -> Option<&PolicyRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }
}

/// Runs every policy on the same trace and cost model.
pub fn compare_policies(
    trace: &ArrivalTrace,
    dataset: &Dataset,
    base: &SimConfig,
    policies: &[Policy],
) -> Result<Comparison> {
    if policies.len() < 2 {
        return Err(Error::InvalidConfig(
            "compare needs at least 2 policies".into(),
        ));
    }
    let outcomes: Vec<(SimResult, LatencySummary)> = policies
        .par_iter()
        .map(|p| {
            let tag = |source: Error| Error::Policy {
                policy: p.name().to_string(),
                source: Box::new(source),
            };
            let result = run(trace, dataset, &base.with_policy(p.clone())).map_err(tag)?;
            let summary = latency_summary(&result).map_err(tag)?;
            Ok((result, summary))
        })
        .collect::<Result<_>>()?;

    let fcfs_mean = policies
        .iter()
        .zip(&outcomes)
        .find(|(p, _)| p.kind() == PolicyKind::Fcfs)
        .map(|(_, (_, s))| s.mean_per_token_ms);
    let rows = outcomes
        .iter()
        .map(|(result, s)| PolicyRow {
            policy: result.policy.clone(),
            n_requests: s.count,
            mean_per_token_ms: s.mean_per_token_ms,
            p90_per_token_ms: s.p90_per_token_ms,
            speedup_vs_fcfs: fcfs_mean.map(|f| speedup(f, s.mean_per_token_ms)),
            tau_b: None,
        })
        .collect();
    Ok(Comparison {
        rows,
        results: outcomes.into_iter().map(|(r, _)| r).collect(),
    })
}
