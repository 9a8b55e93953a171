//! Experiment configuration: a TOML file whose values command-line flags
//! override. The fully resolved configuration is echoed by every command.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::features::{FeatureExtractor, DEFAULT_HASH_DIM};
use crate::predictor::{Objective, TrainConfig};
use crate::scheduler::{PolicyKind, DEFAULT_BATCH_LIMIT, DEFAULT_STARVATION_THRESHOLD_S};
use crate::simulator::{Batching, CostModel};
use crate::workload::{ArrivalMode, LengthModel, SynthConfig, WorkloadStyle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub workload: WorkloadSection,
    pub training: TrainingSection,
    pub simulation: SimulationSection,
    pub policies: PoliciesSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: vec![0],
            workload: WorkloadSection::default(),
            training: TrainingSection::default(),
            simulation: SimulationSection::default(),
            policies: PoliciesSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSection {
    /// Input dataset (train, eval-predictor, simulate, compare).
    pub data: Option<PathBuf>,
    /// Input arrival trace; generated from `arrivals` when absent.
    pub trace: Option<PathBuf>,
    pub n: usize,
    pub dist: String,
    pub min_len: u32,
    pub max_len: u32,
    pub levels: u32,
    pub noise: f64,
    pub hidden_sigma: f64,
    pub samples: usize,
    pub filler_words: usize,
    pub embedding_dim: Option<usize>,
    pub style: WorkloadStyle,
    /// `burst` or `poisson:RATE`.
    pub arrivals: String,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        let synth = SynthConfig::default();
        WorkloadSection {
            data: None,
            trace: None,
            n: synth.n,
            dist: synth.length_model.to_string(),
            min_len: synth.min_len,
            max_len: synth.max_len,
            levels: synth.levels,
            noise: synth.noise,
            hidden_sigma: synth.hidden_sigma,
            samples: synth.samples,
            filler_words: synth.filler_words,
            embedding_dim: synth.embedding_dim,
            style: synth.style,
            arrivals: "burst".into(),
        }
    }
}

impl WorkloadSection {
    pub fn synth_config(&self) -> Result<SynthConfig> {
        let length_model: LengthModel = self.dist.parse().context("--dist")?;
        let cfg = SynthConfig {
            n: self.n,
            length_model,
            min_len: self.min_len,
            max_len: self.max_len,
            levels: self.levels,
            noise: self.noise,
            hidden_sigma: self.hidden_sigma,
            samples: self.samples,
            filler_words: self.filler_words,
            embedding_dim: self.embedding_dim,
            style: self.style,
            id_prefix: "p".into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn arrival_mode(&self) -> Result<ArrivalMode> {
        self.arrivals.parse().context("--arrivals")
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .context("no dataset given (--data or [workload] data)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureChoice {
    Hashed,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub objective: Objective,
    /// Defaults to the dataset style's threshold (0.2, or 0.25 for reasoning).
    pub delta: Option<f64>,
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub examples_per_epoch: Option<usize>,
    pub list_size: usize,
    pub features: FeatureChoice,
    /// Hash buckets for hashed features; ignored for embeddings.
    pub dim: usize,
    pub val_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            objective: t.objective,
            delta: None,
            margin: t.margin,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            examples_per_epoch: t.examples_per_epoch,
            list_size: t.list_size,
            features: FeatureChoice::Hashed,
            dim: DEFAULT_HASH_DIM,
            val_fraction: 0.2,
        }
    }
}

impl TrainingSection {
    pub fn train_config(
        &self,
        seed: u64,
        style: WorkloadStyle,
        embedding_dim: Option<usize>,
    ) -> Result<TrainConfig> {
        let features = match self.features {
            FeatureChoice::Hashed => FeatureExtractor::hashed(self.dim),
            FeatureChoice::Embedding => FeatureExtractor::embedding(
                embedding_dim.context("--features embedding needs a dataset with embeddings")?,
            ),
        };
        let cfg = TrainConfig {
            objective: self.objective,
            delta: self.delta.unwrap_or(style.default_delta()),
            margin: self.margin,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            examples_per_epoch: self.examples_per_epoch,
            list_size: self.list_size,
            features,
        };
        cfg.validate()?;
        if !(0.0..1.0).contains(&self.val_fraction) {
            bail!("val_fraction must be in [0, 1) (got {})", self.val_fraction);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub batch_limit: usize,
    /// `continuous` or `static:MAX_WAIT_S`.
    pub batching: String,
    pub starvation_threshold: f64,
    pub t_base: f64,
    pub t_decode: f64,
    pub t_prefill_token: f64,
    pub event_log: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let c = CostModel::default();
        SimulationSection {
            batch_limit: DEFAULT_BATCH_LIMIT,
            batching: "continuous".into(),
            starvation_threshold: DEFAULT_STARVATION_THRESHOLD_S,
            t_base: c.t_base,
            t_decode: c.t_decode,
            t_prefill_token: c.t_prefill_token,
            event_log: false,
        }
    }
}

impl SimulationSection {
    pub fn cost(&self) -> CostModel {
        CostModel {
            t_base: self.t_base,
            t_decode: self.t_decode,
            t_prefill_token: self.t_prefill_token,
        }
    }

    pub fn batching(&self) -> Result<Batching> {
        self.batching.parse().context("--batching")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoliciesSection {
    pub list: Vec<PolicyKind>,
    pub pars_model: Option<PathBuf>,
    pub pointwise_model: Option<PathBuf>,
    pub listwise_model: Option<PathBuf>,
}

impl Default for PoliciesSection {
    fn default() -> Self {
        PoliciesSection {
            list: PolicyKind::ALL.to_vec(),
            pars_model: None,
            pointwise_model: None,
            listwise_model: None,
        }
    }
}

impl PoliciesSection {
    pub fn model_for(&self, kind: PolicyKind) -> Option<&Path> {
        match kind {
            PolicyKind::Pars => self.pars_model.as_deref(),
            PolicyKind::Pointwise => self.pointwise_model.as_deref(),
            PolicyKind::Listwise => self.listwise_model.as_deref(),
            PolicyKind::Fcfs | PolicyKind::Oracle => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Multipliers applied to the base Poisson rate; empty runs the base
    /// arrivals only.
    pub rate_multipliers: Vec<f64>,
    /// Requests in a burst scenario (first N records of the dataset).
    pub burst: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            rate_multipliers: Vec::new(),
            burst: 500,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map(Self::load).unwrap_or_else(|| Ok(Self::default()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks the invariants shared by all commands.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds list must not be empty");
        }
        let paths = [
            ("workload.data", &self.workload.data),
            ("workload.trace", &self.workload.trace),
            ("policies.pars_model", &self.policies.pars_model),
            ("policies.pointwise_model", &self.policies.pointwise_model),
            ("policies.listwise_model", &self.policies.listwise_model),
        ];
        for (name, path) in paths {
            if let Some(p) = path {
                if !p.exists() {
                    bail!("{name}: {} does not exist", p.display());
                }
            }
        }
        if self
            .sweep
            .rate_multipliers
            .iter()
            .any(|m| !(m.is_finite() && *m > 0.0))
        {
            bail!("rate multipliers must be > 0");
        }
        if self.sweep.burst == 0 {
            bail!("burst size must be >= 1");
        }
        self.simulation.batching()?;
        Ok(())
    }
}
