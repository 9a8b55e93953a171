//! Response-length predictors.
//!
//! A [`LinearScorer`] maps prompt features to a scalar; higher means a longer
//! expected response. Three training objectives are available: pairwise
//! margin ranking over filtered pairs, pointwise L1 regression on
//! `ln(1 + len)`, and listwise ListMLE.

mod loss;
mod pairs;
mod train;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, SparseVec};
use crate::metrics::{kendall_tau_b, TauResult};
use crate::workload::{Dataset, PromptRecord};

pub use loss::{
    l1_grad, l1_loss, listmle_loss_and_grad, margin_ranking_grad, margin_ranking_loss,
    pointwise_target,
};
pub use pairs::{
    build_pairs, build_pairs_with_stats, min_length_difference, qualifies, Label, PairStats,
    RankedPair, DRAW_BUDGET_FACTOR,
};
pub use train::{pair_loss, pair_loss_grad, train, train_on_features};

pub const MODEL_FORMAT: &str = "pars-model";
pub const MODEL_VERSION: u32 = 1;

pub const DEFAULT_PAIRS_PER_RECORD: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Pairwise,
    PointwiseL1,
    ListwiseListmle,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Pairwise => "pairwise",
            Objective::PointwiseL1 => "pointwise_l1",
            Objective::ListwiseListmle => "listwise_listmle",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise" => Ok(Objective::Pairwise),
            "pointwise_l1" | "pointwise" => Ok(Objective::PointwiseL1),
            "listwise_listmle" | "listwise" => Ok(Objective::ListwiseListmle),
            _ => Err(Error::InvalidConfig(format!(
                "unknown objective {s:?} (pairwise, pointwise_l1, listwise_listmle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    /// Minimum relative length gap for a pair to be used.
    pub delta: f64,
    pub margin: f64,
    pub epochs: usize,
    /// Examples per minibatch: pairs, records, or list items depending on
    /// the objective.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Training examples per epoch: pairs (pairwise), records (pointwise) or
    /// list items (listwise). By default a pairwise epoch draws
    /// [`DEFAULT_PAIRS_PER_RECORD`] pairs per training record and the other
    /// objectives make one pass over the records.
    pub examples_per_epoch: Option<usize>,
    pub list_size: usize,
    pub features: FeatureExtractor,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Pairwise,
            delta: 0.2,
            margin: 1.0,
            epochs: 5,
            batch_size: 128,
            learning_rate: 0.1,
            seed: 0,
            examples_per_epoch: None,
            list_size: 10,
            features: FeatureExtractor::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.delta) {
            return bad(format!("delta must be in [0, 1) (got {})", self.delta));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be > 0 (got {})", self.margin));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be > 0 (got {})",
                self.learning_rate
            ));
        }
        if self.examples_per_epoch == Some(0) {
            return bad("examples_per_epoch must be >= 1".into());
        }
        if self.list_size < 2 {
            return bad("list_size must be >= 2".into());
        }
        self.features.validate()
    }

    pub fn examples_for(&self, n_records: usize) -> usize {
        let default = match self.objective {
            Objective::Pairwise => n_records.saturating_mul(DEFAULT_PAIRS_PER_RECORD),
            Objective::PointwiseL1 | Objective::ListwiseListmle => n_records,
        };
        self.examples_per_epoch.unwrap_or(default).max(1)
    }
}

/// Scores prompts; larger means a longer expected response.
pub trait Scorer: Send + Sync {
    fn score(&self, record: &PromptRecord) -> Result<f64>;

    fn score_batch(&self, records: &[PromptRecord]) -> Result<Vec<f64>> {
        records.iter().map(|r| self.score(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub extractor: FeatureExtractor,
}

impl LinearScorer {
    /// All-zero weights and bias.
    pub fn zeros(extractor: FeatureExtractor) -> Self {
        LinearScorer {
            weights: vec![0.0; extractor.dim()],
            bias: 0.0,
            extractor,
        }
    }

    pub fn score_features(&self, x: &SparseVec) -> f64 {
        x.dot(&self.weights) + self.bias
    }
}

impl Scorer for LinearScorer {
    fn score(&self, record: &PromptRecord) -> Result<f64> {
        Ok(self.score_features(&self.extractor.extract(record)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub scorer: LinearScorer,
    pub objective: Objective,
    pub config: TrainConfig,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    objective: Objective,
    extractor: FeatureExtractor,
    dim: usize,
    bias: f64,
    weights: Vec<f64>,
    config: TrainConfig,
    loss_trace: Vec<f64>,
}

impl TrainedModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            objective: self.objective,
            extractor: self.scorer.extractor.clone(),
            dim: self.scorer.weights.len(),
            bias: self.scorer.bias,
            weights: self.scorer.weights.clone(),
            config: self.config.clone(),
            loss_trace: self.loss_trace.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if file.format != MODEL_FORMAT {
            return Err(Error::InvalidInput(format!(
                "{}: not a model file (format {:?})",
                path.display(),
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelVersion(file.version));
        }
        if file.dim != file.weights.len() || file.dim != file.extractor.dim() {
            return Err(Error::InvalidInput(format!(
                "{}: dim {} disagrees with weights ({}) or extractor ({})",
                path.display(),
                file.dim,
                file.weights.len(),
                file.extractor.dim()
            )));
        }
        Ok(TrainedModel {
            scorer: LinearScorer {
                weights: file.weights,
                bias: file.bias,
                extractor: file.extractor,
            },
            objective: file.objective,
            config: file.config,
            loss_trace: file.loss_trace,
        })
    }
}

impl Scorer for TrainedModel {
    fn score(&self, record: &PromptRecord) -> Result<f64> {
        self.scorer.score(record)
    }
}

/// Perfect-foresight scorer: the ground-truth response length.
#[derive(Debug, Clone, Default)]
pub struct OracleScorer {
    lengths: HashMap<String, u32>,
}

impl OracleScorer {
    pub fn new(records: &[PromptRecord]) -> Self {
        OracleScorer {
            lengths: records
                .iter()
                .map(|r| (r.id.clone(), r.output_len))
                .collect(),
        }
    }

    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self::new(&dataset.records)
    }
}

impl Scorer for OracleScorer {
    fn score(&self, record: &PromptRecord) -> Result<f64> {
        self.lengths
            .get(&record.id)
            .map(|&l| l as f64)
            .ok_or_else(|| Error::UnknownPrompt(record.id.clone()))
    }
}

/// Kendall tau-b between predicted scores and true lengths.
pub fn evaluate(scorer: &dyn Scorer, records: &[PromptRecord]) -> Result<TauResult> {
    let scores = scorer.score_batch(records)?;
    let lengths: Vec<f64> = records.iter().map(|r| r.output_len as f64).collect();
    kendall_tau_b(&scores, &lengths)
}
