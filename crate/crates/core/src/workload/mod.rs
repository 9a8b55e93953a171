//! Prompt datasets, synthetic workloads and arrival traces.
//!
//! Datasets are stored as line-delimited JSON. The first line is a header
//! carrying the format tag, the format version and the embedding dimension
//! (if records carry embeddings); every following line is one record:
//!
//! ```text
//! {"format":"pars-dataset","version":1,"embedding_dim":null,"style":"standard"}
//! {"id":"p000000","prompt":"summarize the ...","output_len":212,"prompt_len":9}
//! {"id":"p000001","prompt":"...","output_len":40,"output_len_samples":[38,40,44],"prompt_len":7}
//! ```

mod arrivals;
mod synth;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use arrivals::{generate_arrivals, ArrivalMode, ArrivalTrace, TraceEntry};
pub use synth::{synthesize_dataset, LengthModel, MixtureComponent, SynthConfig};

pub const DATASET_FORMAT: &str = "pars-dataset";
pub const DATASET_VERSION: u32 = 1;

/// A prompt together with its ground-truth response length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    #[serde(rename = "prompt")]
    pub prompt_text: String,
    /// Ground-truth response length in tokens.
    pub output_len: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_len_samples: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    pub prompt_len: u32,
}

impl PromptRecord {
    /// Builds a record, deriving `prompt_len` from whitespace tokens.
    pub fn new(id: impl Into<String>, prompt_text: impl Into<String>, output_len: u32) -> Self {
        let prompt_text = prompt_text.into();
        let prompt_len = whitespace_len(&prompt_text);
        PromptRecord {
            id: id.into(),
            prompt_text,
            output_len,
            output_len_samples: None,
            embedding: None,
            prompt_len,
        }
    }

    pub fn validate(&self, embedding_dim: Option<usize>) -> Result<()> {
        let invalid = |message: String| Error::InvalidRecord {
            id: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.output_len < 1 {
            return Err(invalid("output_len must be >= 1".into()));
        }
        if self.prompt_len < 1 {
            return Err(invalid("prompt_len must be >= 1".into()));
        }
        if let Some(samples) = &self.output_len_samples {
            if samples.is_empty() {
                return Err(invalid("output_len_samples is empty".into()));
            }
            if samples.iter().any(|&s| s < 1) {
                return Err(invalid("output_len_samples must all be >= 1".into()));
            }
            let median = median_floor(samples);
            if median != self.output_len {
                return Err(invalid(format!(
                    "output_len {} differs from sample median {median}",
                    self.output_len
                )));
            }
        }
        if let Some(emb) = &self.embedding {
            if let Some(dim) = embedding_dim {
                if emb.len() != dim {
                    return Err(Error::EmbeddingDim {
                        id: self.id.clone(),
                        expected: dim,
                        found: emb.len(),
                    });
                }
            }
            if emb.iter().any(|v| !v.is_finite()) {
                return Err(invalid("embedding contains non-finite values".into()));
            }
        }
        Ok(())
    }
}

/// Number of whitespace-separated tokens, at least 1.
pub fn whitespace_len(text: &str) -> u32 {
    text.split_whitespace().count().max(1) as u32
}

/// Median of the samples; the mean of the two middle values, rounded down,
/// for even counts.
pub fn median_floor(samples: &[u32]) -> u32 {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        ((sorted[n / 2 - 1] as u64 + sorted[n / 2] as u64) / 2) as u32
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadStyle {
    #[default]
    Standard,
    /// Long, highly variable responses (reasoning traces).
    Reasoning,
}

impl WorkloadStyle {
    /// Pair-filtering threshold suited to the output variance of the style.
    pub fn default_delta(self) -> f64 {
        match self {
            WorkloadStyle::Standard => 0.2,
            WorkloadStyle::Reasoning => 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub embedding_dim: Option<usize>,
    #[serde(default)]
    pub style: WorkloadStyle,
}

impl Default for DatasetHeader {
    fn default() -> Self {
        DatasetHeader {
            format: DATASET_FORMAT.to_string(),
            version: DATASET_VERSION,
            embedding_dim: None,
            style: WorkloadStyle::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<PromptRecord>,
}

/// On-disk record shape. Everything is optional here so that a missing field
/// is reported with its line number instead of a bare serde message.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: Option<String>,
    prompt: Option<String>,
    output_len: Option<u32>,
    #[serde(default)]
    output_len_samples: Option<Vec<u32>>,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
    #[serde(default)]
    prompt_len: Option<u32>,
}

impl Dataset {
    pub fn new(records: Vec<PromptRecord>) -> Result<Self> {
        let embedding_dim = records
            .iter()
            .find_map(|r| r.embedding.as_ref().map(Vec::len));
        let header = DatasetHeader {
            embedding_dim,
            ..DatasetHeader::default()
        };
        Self::with_header(header, records)
    }

    pub fn with_header(header: DatasetHeader, records: Vec<PromptRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate(header.embedding_dim)?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Dataset { header, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn index(&self) -> HashMap<&str, &PromptRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    /// Splits off the trailing `fraction` of records, keeping the header.
    pub fn split_tail(&self, fraction: f64) -> (Dataset, Dataset) {
        let n_tail = ((self.len() as f64) * fraction).round() as usize;
        let n_head = self.len() - n_tail.min(self.len());
        let head = Dataset {
            header: self.header.clone(),
            records: self.records[..n_head].to_vec(),
        };
        let tail = Dataset {
            header: self.header.clone(),
            records: self.records[n_head..].to_vec(),
        };
        (head, tail)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut emit = |value: String| writeln!(out, "{value}").map_err(|e| Error::io(path, e));
        emit(serde_json::to_string(&self.header).expect("header serializes"))?;
        for r in &self.records {
            emit(serde_json::to_string(r).expect("record serializes"))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a dataset file, validating every record. Stops after `limit`
/// records when given.
pub fn load_dataset(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut header: Option<DatasetHeader> = None;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(header) = header.as_mut() else {
            let h: DatasetHeader = serde_json::from_str(&line)
                .map_err(|e| parse_err(lineno, format!("bad header: {e}")))?;
            if h.format != DATASET_FORMAT {
                return Err(parse_err(lineno, format!("unknown format {:?}", h.format)));
            }
            if h.version != DATASET_VERSION {
                return Err(parse_err(
                    lineno,
                    format!("unsupported version {}", h.version),
                ));
            }
            header = Some(h);
            continue;
        };
        if limit.is_some_and(|l| records.len() >= l) {
            break;
        }
        let raw: RecordLine =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let missing = |field: &str| parse_err(lineno, format!("missing field `{field}`"));
        let id = raw.id.ok_or_else(|| missing("id"))?;
        let prompt_text = raw.prompt.ok_or_else(|| missing("prompt"))?;
        let output_len = raw.output_len.ok_or_else(|| missing("output_len"))?;
        let prompt_len = raw
            .prompt_len
            .unwrap_or_else(|| whitespace_len(&prompt_text));
        let record = PromptRecord {
            id,
            prompt_text,
            output_len,
            output_len_samples: raw.output_len_samples,
            embedding: raw.embedding,
            prompt_len,
        };
        if header.embedding_dim.is_none() {
            header.embedding_dim = record.embedding.as_ref().map(Vec::len);
        }
        record
            .validate(header.embedding_dim)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(parse_err(lineno, Error::DuplicateId(record.id).to_string()));
        }
        records.push(record);
    }
    let header = header.ok_or_else(|| parse_err(1, "missing header line".into()))?;
    Ok(Dataset { header, records })
}
