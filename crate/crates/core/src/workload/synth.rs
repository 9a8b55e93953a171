//! Synthetic workloads with controllable length distributions.
//!
//! Every prompt carries a latent length level `q` in `0..levels`, written
//! into the text as two literal tokens, `scope-<a>` and `detail-<b>` with
//! `q = 16 * a + b` and `a`, `b` rendered as letters (`a` = 0, `b` = 1, ...).
//! The noise-free response length is a fixed function of the level (see
//! [`SynthConfig::level_length`]); noise is applied on top of it.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{median_floor, Dataset, DatasetHeader, PromptRecord, WorkloadStyle};
use crate::error::{Error, Result};

const DIGITS_PER_LEVEL: u32 = 16;

const FILLER: &[&str] = &[
    "explain",
    "write",
    "describe",
    "list",
    "summarize",
    "compare",
    "translate",
    "draft",
    "review",
    "outline",
    "analyze",
    "suggest",
    "story",
    "poem",
    "email",
    "report",
    "recipe",
    "history",
    "science",
    "code",
    "function",
    "question",
    "answer",
    "topic",
    "city",
    "river",
    "music",
    "travel",
    "health",
    "market",
    "garden",
    "planet",
    "memory",
    "energy",
    "system",
    "please",
    "quickly",
    "simple",
    "formal",
    "friendly",
    "short",
    "clear",
    "about",
    "with",
    "for",
    "the",
    "a",
    "an",
    "my",
    "our",
    "this",
    "that",
    "new",
    "old",
    "best",
    "how",
    "why",
    "what",
    "when",
    "where",
    "kids",
    "team",
    "data",
    "model",
    "policy",
    "budget",
    "design",
];

/// Length distribution in token space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthModel {
    /// `exp(N(mu, sigma))`.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl LengthModel {
    pub fn validate(&self) -> Result<()> {
        let check = |mu: f64, sigma: f64| {
            if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
                Err(Error::InvalidDistribution(format!(
                    "lognormal needs finite mu and sigma > 0 (got mu={mu}, sigma={sigma})"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            LengthModel::LogNormal { mu, sigma } => check(*mu, *sigma),
            LengthModel::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidDistribution("empty mixture".into()));
                }
                for c in components {
                    check(c.mu, c.sigma)?;
                    if !(c.weight.is_finite() && c.weight > 0.0) {
                        return Err(Error::InvalidDistribution(format!(
                            "mixture weight must be > 0 (got {})",
                            c.weight
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    fn sample_log<R: Rng>(&self, rng: &mut R) -> f64 {
        let (mu, sigma) = match self {
            LengthModel::LogNormal { mu, sigma } => (*mu, *sigma),
            LengthModel::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = components.last().expect("validated nonempty");
                for c in components {
                    if u < c.weight {
                        pick = c;
                        break;
                    }
                    u -= c.weight;
                }
                (pick.mu, pick.sigma)
            }
        };
        Normal::new(mu, sigma).expect("validated sigma").sample(rng)
    }
}

/// Parses `lognormal:MU,SIGMA` or `mixture:W:MU,SIGMA+W:MU,SIGMA+...`.
impl FromStr for LengthModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidDistribution(format!(
                "{s:?}: expected lognormal:MU,SIGMA or mixture:W:MU,SIGMA+W:MU,SIGMA"
            ))
        };
        let pair = |body: &str| -> Result<(f64, f64)> {
            let (a, b) = body.split_once(',').ok_or_else(bad)?;
            Ok((
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            ))
        };
        let (kind, body) = s.split_once(':').ok_or_else(bad)?;
        let model = match kind.trim() {
            "lognormal" => {
                let (mu, sigma) = pair(body)?;
                LengthModel::LogNormal { mu, sigma }
            }
            "mixture" => {
                let components = body
                    .split('+')
                    .map(|part| {
                        let (w, rest) = part.split_once(':').ok_or_else(bad)?;
                        let (mu, sigma) = pair(rest)?;
                        Ok(MixtureComponent {
                            weight: w.trim().parse().map_err(|_| bad())?,
                            mu,
                            sigma,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                LengthModel::Mixture { components }
            }
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(model)
    }
}

impl fmt::Display for LengthModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LengthModel::LogNormal { mu, sigma } => write!(f, "lognormal:{mu},{sigma}"),
            LengthModel::Mixture { components } => {
                write!(f, "mixture:")?;
                for (i, c) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{}:{},{}", c.weight, c.mu, c.sigma)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub length_model: LengthModel,
    pub min_len: u32,
    pub max_len: u32,
    /// Number of latent length levels written into the prompt text.
    pub levels: u32,
    /// Half-width of the uniform multiplicative noise applied per sample,
    /// e.g. 0.15 for +/-15%.
    pub noise: f64,
    /// Standard deviation of a per-prompt log-space factor that is not
    /// visible in the text.
    pub hidden_sigma: f64,
    /// Repeated-run samples per prompt; above 1 the samples are stored and
    /// `output_len` is their median.
    pub samples: usize,
    pub filler_words: usize,
    /// Emit a precomputed embedding of this dimension (first coordinate is
    /// the normalized latent level, the rest is unit Gaussian noise).
    pub embedding_dim: Option<usize>,
    pub style: WorkloadStyle,
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 1000,
            length_model: LengthModel::LogNormal {
                mu: 5.0,
                sigma: 1.2,
            },
            min_len: 1,
            max_len: 8192,
            levels: 64,
            noise: 0.0,
            hidden_sigma: 0.0,
            samples: 1,
            filler_words: 4,
            embedding_dim: None,
            style: WorkloadStyle::Standard,
            id_prefix: "p".into(),
        }
    }
}

impl SynthConfig {
    /// Preset for reasoning-style workloads: long heavy-tailed outputs and
    /// large run-to-run variance.
    pub fn reasoning(n: usize) -> Self {
        SynthConfig {
            n,
            length_model: LengthModel::Mixture {
                components: vec![
                    MixtureComponent {
                        weight: 0.7,
                        mu: 6.5,
                        sigma: 0.8,
                    },
                    MixtureComponent {
                        weight: 0.3,
                        mu: 7.8,
                        sigma: 0.5,
                    },
                ],
            },
            min_len: 16,
            max_len: 16384,
            noise: 0.2,
            samples: 5,
            style: WorkloadStyle::Reasoning,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.length_model.validate()?;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 1 {
            return bad("n must be >= 1".into());
        }
        if self.min_len < 1 || self.max_len < self.min_len {
            return bad(format!(
                "length bounds must satisfy 1 <= min_len <= max_len (got {}..{})",
                self.min_len, self.max_len
            ));
        }
        if self.levels < 1 || self.levels > DIGITS_PER_LEVEL * 26 {
            return bad(format!("levels must be in 1..={}", DIGITS_PER_LEVEL * 26));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise must be in [0, 1) (got {})", self.noise));
        }
        if !(self.hidden_sigma >= 0.0 && self.hidden_sigma.is_finite()) {
            return bad(format!(
                "hidden_sigma must be >= 0 (got {})",
                self.hidden_sigma
            ));
        }
        if self.samples < 1 {
            return bad("samples must be >= 1".into());
        }
        if self.embedding_dim == Some(0) {
            return bad("embedding_dim must be >= 1".into());
        }
        Ok(())
    }

    fn log_bounds(&self) -> (f64, f64) {
        ((self.min_len as f64).ln(), (self.max_len as f64).ln())
    }

    /// Latent level of a real-valued length: its position on the log scale
    /// between `min_len` and `max_len`, cut into `levels` equal bins.
    pub fn level_of(&self, len: f64) -> u32 {
        let (lo, hi) = self.log_bounds();
        if hi <= lo {
            return 0;
        }
        let x = (len.max(1e-12).ln() - lo) / (hi - lo) * self.levels as f64;
        x.floor().clamp(0.0, (self.levels - 1) as f64) as u32
    }

    /// Noise-free response length of level `q`: the geometric bin center
    /// `round(exp(ln min + (q + 0.5) / levels * (ln max - ln min)))`,
    /// clamped to the bounds.
    pub fn level_length(&self, q: u32) -> u32 {
        let (lo, hi) = self.log_bounds();
        let x = lo + (q as f64 + 0.5) / self.levels as f64 * (hi - lo);
        (x.exp().round() as u32).clamp(self.min_len, self.max_len)
    }

    /// The two latent tokens encoding level `q`.
    pub fn level_tokens(q: u32) -> (String, String) {
        let letter = |d: u32| char::from(b'a' + d as u8);
        (
            format!("scope-{}", letter(q / DIGITS_PER_LEVEL)),
            format!("detail-{}", letter(q % DIGITS_PER_LEVEL)),
        )
    }

    /// Recovers the latent level from prompt text, if present.
    pub fn parse_level(text: &str) -> Option<u32> {
        let digit = |tok: &str, prefix: &str| {
            let rest = tok.strip_prefix(prefix)?;
            let c = rest.chars().next()?;
            (rest.len() == 1 && c.is_ascii_lowercase()).then(|| c as u32 - 'a' as u32)
        };
        let mut hi = None;
        let mut lo = None;
        for tok in text.split_whitespace() {
            hi = hi.or_else(|| digit(tok, "scope-"));
            lo = lo.or_else(|| digit(tok, "detail-"));
        }
        Some(hi? * DIGITS_PER_LEVEL + lo?)
    }

    fn clamp_len(&self, x: f64) -> u32 {
        x.round().clamp(self.min_len as f64, self.max_len as f64) as u32
    }
}

/// Generates `config.n` prompts; fully determined by `(config, seed)`.
pub fn synthesize_dataset(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = Normal::new(0.0, config.hidden_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let width = (config.n.max(2) - 1).to_string().len().max(6);

    let mut records = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let raw = config.length_model.sample_log(&mut rng).exp();
        let q = config.level_of(config.clamp_len(raw) as f64);
        let clean = config.level_length(q) as f64;
        let hidden_factor = if config.hidden_sigma > 0.0 {
            hidden.sample(&mut rng).exp()
        } else {
            1.0
        };

        let samples: Vec<u32> = (0..config.samples)
            .map(|_| {
                let u = if config.noise > 0.0 {
                    rng.random_range(-config.noise..=config.noise)
                } else {
                    0.0
                };
                config.clamp_len(clean * hidden_factor * (1.0 + u))
            })
            .collect();

        let mut words: Vec<&str> = (0..config.filler_words)
            .map(|_| *FILLER.choose(&mut rng).expect("nonempty vocabulary"))
            .collect();
        let (scope, detail) = SynthConfig::level_tokens(q);
        let pos = rng.random_range(0..=words.len());
        words.insert(pos, &scope);
        let pos = rng.random_range(0..=words.len());
        words.insert(pos, &detail);
        let text = words.join(" ");

        let embedding = config.embedding_dim.map(|d| {
            let mut e = Vec::with_capacity(d);
            e.push((q as f64 + 0.5) / config.levels as f64);
            e.extend((1..d).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
            e
        });

        let mut record = PromptRecord::new(format!("{}{i:0width$}", config.id_prefix), text, 0);
        record.output_len = median_floor(&samples);
        if config.samples > 1 {
            record.output_len_samples = Some(samples);
        }
        record.embedding = embedding;
        records.push(record);
    }

    let header = DatasetHeader {
        embedding_dim: config.embedding_dim,
        style: config.style,
        ..DatasetHeader::default()
    };
    Dataset::with_header(header, records)
}
