//! Result files written by the harness.
//!
//! Per run directory:
//!
//! - `requests.csv`: `prompt_id,arrival_s,admit_s,finish_s,output_len,per_token_latency_ms`,
//!   one row per request in trace order.
//! - `summary.json`: a [`RunSummary`].
//! - `events.jsonl`: optional event log, one JSON event per line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::simulator::{CompletionRecord, Event, SimResult};

pub const REQUESTS_FILE: &str = "requests.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRow {
    pub prompt_id: String,
    pub arrival_s: f64,
    pub admit_s: f64,
    pub finish_s: f64,
    pub output_len: u32,
    pub per_token_latency_ms: f64,
}

impl From<&CompletionRecord> for RequestRow {
    fn from(r: &CompletionRecord) -> Self {
        RequestRow {
            prompt_id: r.prompt_id.clone(),
            arrival_s: r.arrival,
            admit_s: r.admit,
            finish_s: r.finish,
            output_len: r.output_len,
            per_token_latency_ms: r.per_token_latency * 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub policy: String,
    pub n_requests: usize,
    pub mean_per_token_ms: f64,
    pub p90_per_token_ms: f64,
    pub speedup_vs_fcfs: Option<f64>,
    pub tau_b: Option<f64>,
    pub iterations: u64,
    pub makespan_s: f64,
}

pub fn write_requests_csv(path: &Path, result: &SimResult) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in &result.records {
        w.serialize(RequestRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_requests_csv(path: &Path) -> Result<Vec<RequestRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the three files for one run into `dir`.
pub fn write_run(dir: &Path, result: &SimResult, summary: &RunSummary) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_requests_csv(&dir.join(REQUESTS_FILE), result)?;
    write_json(&dir.join(SUMMARY_FILE), summary)?;
    if !result.events.is_empty() {
        write_events(&dir.join(EVENTS_FILE), &result.events)?;
    }
    Ok(())
}
