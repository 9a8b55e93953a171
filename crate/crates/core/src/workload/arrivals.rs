//! Arrival traces.
//!
//! Trace files are plain text: a versioned header, a column line, then one
//! `prompt_id,arrival_time_s` row per arrival.
//!
//! ```text
//! # pars-trace v1 mode=poisson rate=2 seed=7
//! prompt_id,arrival_time_s
//! p000000,0.31
//! ```

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{Dataset, PromptRecord};
use crate::error::{Error, Result};

const TRACE_MAGIC: &str = "# pars-trace v1";
const TRACE_COLUMNS: &str = "prompt_id,arrival_time_s";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ArrivalMode {
    /// Exponential inter-arrival gaps with the given rate (requests/s).
    Poisson { rate: f64 },
    /// Everything arrives at t = 0.
    Burst,
}

impl fmt::Display for ArrivalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArrivalMode::Poisson { rate } => write!(f, "poisson:{rate}"),
            ArrivalMode::Burst => write!(f, "burst"),
        }
    }
}

impl FromStr for ArrivalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "burst" {
            return Ok(ArrivalMode::Burst);
        }
        let rate = s
            .strip_prefix("poisson:")
            .and_then(|r| r.parse::<f64>().ok())
            .ok_or_else(|| {
                Error::InvalidConfig(format!("{s:?}: expected `burst` or `poisson:RATE`"))
            })?;
        let mode = ArrivalMode::Poisson { rate };
        mode.validate()?;
        Ok(mode)
    }
}

impl ArrivalMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ArrivalMode::Poisson { rate } if !(rate > 0.0 && rate.is_finite()) => Err(
                Error::InvalidConfig(format!("poisson rate must be > 0 (got {rate})")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub prompt_id: String,
    pub arrival_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalTrace {
    pub entries: Vec<TraceEntry>,
    pub seed: u64,
    pub mode: ArrivalMode,
}

impl ArrivalTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks ordering and (for burst traces) that all arrivals are at zero.
    pub fn validate(&self) -> Result<()> {
        let mut prev = 0.0f64;
        for e in &self.entries {
            if !(e.arrival_time.is_finite() && e.arrival_time >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "arrival time of {} must be finite and >= 0",
                    e.prompt_id
                )));
            }
            if e.arrival_time < prev {
                return Err(Error::InvalidInput(format!(
                    "arrival times must be non-decreasing (at {})",
                    e.prompt_id
                )));
            }
            if self.mode == ArrivalMode::Burst && e.arrival_time != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "burst trace has nonzero arrival for {}",
                    e.prompt_id
                )));
            }
            prev = e.arrival_time;
        }
        Ok(())
    }

    /// Every prompt id must exist in `dataset`.
    pub fn check_resolves(&self, dataset: &Dataset) -> Result<()> {
        let index = dataset.index();
        match self
            .entries
            .iter()
            .find(|e| !index.contains_key(e.prompt_id.as_str()))
        {
            Some(e) => Err(Error::UnknownPrompt(e.prompt_id.clone())),
            None => Ok(()),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(e) = self
            .entries
            .iter()
            .find(|e| e.prompt_id.contains(['\n', '\r']))
        {
            return Err(Error::InvalidInput(format!(
                "prompt id {:?} contains a line break",
                e.prompt_id
            )));
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let mode = match self.mode {
            ArrivalMode::Poisson { rate } => format!("mode=poisson rate={rate}"),
            ArrivalMode::Burst => "mode=burst".to_string(),
        };
        writeln!(out, "{TRACE_MAGIC} {mode} seed={}", self.seed).map_err(io)?;
        writeln!(out, "{TRACE_COLUMNS}").map_err(io)?;
        for e in &self.entries {
            writeln!(out, "{},{}", e.prompt_id, e.arrival_time).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = BufReader::new(file).lines().enumerate();
        let next_line = |lines: &mut std::iter::Enumerate<std::io::Lines<BufReader<File>>>| {
            lines
                .next()
                .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(|e| Error::io(path, e)))
                .transpose()
        };

        let (_, header) =
            next_line(&mut lines)?.ok_or_else(|| parse_err(1, "empty trace file".into()))?;
        let rest = header.strip_prefix(TRACE_MAGIC).ok_or_else(|| {
            parse_err(1, format!("expected header starting with {TRACE_MAGIC:?}"))
        })?;
        let mut mode = None;
        let mut rate = None;
        let mut seed = 0u64;
        for kv in rest.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| parse_err(1, format!("bad header field {kv:?}")))?;
            let num_err = || parse_err(1, format!("bad value for {k}"));
            match k {
                "mode" => mode = Some(v.to_string()),
                "rate" => rate = Some(v.parse::<f64>().map_err(|_| num_err())?),
                "seed" => seed = v.parse().map_err(|_| num_err())?,
                _ => return Err(parse_err(1, format!("unknown header field {k:?}"))),
            }
        }
        let mode = match (mode.as_deref(), rate) {
            (Some("burst"), _) => ArrivalMode::Burst,
            (Some("poisson"), Some(rate)) => ArrivalMode::Poisson { rate },
            _ => {
                return Err(parse_err(
                    1,
                    "header needs mode=burst or mode=poisson rate=R".into(),
                ))
            }
        };

        match next_line(&mut lines)? {
            Some((_, l)) if l.trim() == TRACE_COLUMNS => {}
            Some((n, _)) => return Err(parse_err(n, format!("expected {TRACE_COLUMNS:?}"))),
            None => return Err(parse_err(2, "missing column line".into())),
        }

        let mut entries = Vec::new();
        while let Some((n, line)) = next_line(&mut lines)? {
            if line.trim().is_empty() {
                continue;
            }
            let (id, t) = line
                .rsplit_once(',')
                .ok_or_else(|| parse_err(n, "expected prompt_id,arrival_time_s".into()))?;
            let arrival_time = t
                .trim()
                .parse()
                .map_err(|_| parse_err(n, format!("bad arrival time {t:?}")))?;
            entries.push(TraceEntry {
                prompt_id: id.to_string(),
                arrival_time,
            });
        }
        let trace = ArrivalTrace {
            entries,
            seed,
            mode,
        };
        trace.validate()?;
        Ok(trace)
    }
}

/// Builds an arrival trace over `records` in dataset order.
pub fn generate_arrivals(
    records: &[PromptRecord],
    mode: ArrivalMode,
    seed: u64,
) -> Result<ArrivalTrace> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    mode.validate()?;
    let entries = match mode {
        ArrivalMode::Burst => records
            .iter()
            .map(|r| TraceEntry {
                prompt_id: r.id.clone(),
                arrival_time: 0.0,
            })
            .collect(),
        ArrivalMode::Poisson { rate } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gap = Exp::new(rate).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let mut t = 0.0;
            records
                .iter()
                .map(|r| {
                    t += gap.sample(&mut rng);
                    TraceEntry {
                        prompt_id: r.id.clone(),
                        arrival_time: t,
                    }
                })
                .collect()
        }
    };
    Ok(ArrivalTrace {
        entries,
        seed,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize) -> Vec<PromptRecord> {
        (0..n)
            .map(|i| PromptRecord::new(format!("r{i}"), "x", 1 + i as u32))
            .collect()
    }

    #[test]
    fn burst_is_all_zero() {
        let t = generate_arrivals(&records(5), ArrivalMode::Burst, 1).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.entries.iter().all(|e| e.arrival_time == 0.0));
        t.validate().unwrap();
    }

    #[test]
    fn poisson_mean_gap_matches_rate() {
        let rate = 2.0;
        let t = generate_arrivals(&records(10_000), ArrivalMode::Poisson { rate }, 9).unwrap();
        let mean_gap = t.entries.last().unwrap().arrival_time / t.len() as f64;
        assert!(
            (mean_gap - 1.0 / rate).abs() / (1.0 / rate) < 0.05,
            "{mean_gap}"
        );
        t.validate().unwrap();
    }

    #[test]
    fn deterministic_and_ordered() {
        let mode = ArrivalMode::Poisson { rate: 3.0 };
        let a = generate_arrivals(&records(100), mode, 4).unwrap();
        let b = generate_arrivals(&records(100), mode, 4).unwrap();
        assert_eq!(a, b);
        assert!(a
            .entries
            .windows(2)
            .all(|w| w[0].arrival_time <= w[1].arrival_time));
        let ids: Vec<_> = a.entries.iter().map(|e| e.prompt_id.as_str()).collect();
        assert_eq!(ids[..3], ["r0", "r1", "r2"]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            generate_arrivals(&[], ArrivalMode::Burst, 0),
            Err(Error::EmptyDataset)
        ));
        assert!(generate_arrivals(&records(3), ArrivalMode::Poisson { rate: 0.0 }, 0).is_err());
        assert!("poisson:-1".parse::<ArrivalMode>().is_err());
        assert_eq!(
            "poisson:2.5".parse::<ArrivalMode>().unwrap(),
            ArrivalMode::Poisson { rate: 2.5 }
        );
    }

    #[test]
    fn file_round_trip() {
        let t = generate_arrivals(&records(50), ArrivalMode::Poisson { rate: 1.7 }, 3).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        t.write(f.path()).unwrap();
        assert_eq!(ArrivalTrace::load(f.path()).unwrap(), t);

        let t = generate_arrivals(&records(4), ArrivalMode::Burst, 3).unwrap();
        t.write(f.path()).unwrap();
        assert_eq!(ArrivalTrace::load(f.path()).unwrap(), t);
    }
}
