//! The `pars` command-line harness.
//!
//! Commands: `gen-workload`, `train`, `eval-predictor`, `simulate`,
//! `compare`. Each accepts `--config FILE` (TOML, see [`ExperimentConfig`]),
//! `--seed` and `--out`; flags override the file. The resolved configuration
//! is printed on start and stored next to the outputs.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::ExperimentConfig;
use config::FeatureChoice;
use output::{write_json, write_run, RunSummary};

use crate::error::Error;
use crate::metrics::{latency_summary, nearest_rank};
use crate::predictor::{evaluate, train, Objective, OracleScorer, Scorer, TrainedModel};
use crate::scheduler::{Policy, PolicyKind};
use crate::simulator::{compare_policies, run, SimConfig, SimResult};
use crate::workload::{
    generate_arrivals, load_dataset, synthesize_dataset, ArrivalMode, ArrivalTrace, Dataset,
    WorkloadStyle,
};

pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Debug, Parser)]
#[command(
    name = "pars",
    version,
    about = "Length-ranking schedulers for LLM serving, simulated"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a prompt dataset and an arrival trace.
    GenWorkload(GenWorkloadArgs),
    /// Train a length-ranking predictor.
    Train(TrainArgs),
    /// Kendall tau-b of predictors against true lengths.
    EvalPredictor(EvalArgs),
    /// Simulate one scheduling policy.
    Simulate(SimulateArgs),
    /// Simulate several policies on identical traces.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (a file path for `train`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct WorkloadFlags {
    /// Dataset file (JSONL).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Arrival trace file; otherwise generated from --arrivals.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// `burst` or `poisson:RATE` (requests per second).
    #[arg(long)]
    pub arrivals: Option<String>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct SimFlags {
    #[arg(long)]
    pub batch_limit: Option<usize>,
    /// `continuous` or `static:MAX_WAIT_S`.
    #[arg(long)]
    pub batching: Option<String>,
    /// Seconds of waiting before a request is boosted.
    #[arg(long)]
    pub starvation_threshold: Option<f64>,
    #[arg(long)]
    pub t_base: Option<f64>,
    #[arg(long)]
    pub t_decode: Option<f64>,
    #[arg(long)]
    pub t_prefill_token: Option<f64>,
    /// Also write events.jsonl per run.
    #[arg(long)]
    pub event_log: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenWorkloadArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: Option<usize>,
    /// `lognormal:MU,SIGMA` or `mixture:W:MU,SIGMA+W:MU,SIGMA...`.
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub min_len: Option<u32>,
    #[arg(long)]
    pub max_len: Option<u32>,
    #[arg(long)]
    pub levels: Option<u32>,
    /// Uniform multiplicative noise half-width, e.g. 0.15.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub hidden_sigma: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub filler_words: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// `standard` or `reasoning`.
    #[arg(long)]
    pub style: Option<String>,
    /// `burst` or `poisson:RATE`.
    #[arg(long)]
    pub arrivals: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// pairwise | pointwise_l1 | listwise_listmle
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub examples_per_epoch: Option<usize>,
    /// hashed | embedding
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model files to evaluate (repeatable).
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Include the ground-truth scorer.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub workload: WorkloadFlags,
    #[command(flatten)]
    pub sim: SimFlags,
    /// fcfs | pointwise | listwise | oracle | pars
    #[arg(long, default_value = "fcfs")]
    pub policy: String,
    /// Model file for learned policies.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Requests in a burst (first N records).
    #[arg(long)]
    pub burst: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub workload: WorkloadFlags,
    #[command(flatten)]
    pub sim: SimFlags,
    /// Comma-separated policies.
    #[arg(long, value_delimiter = ',')]
    pub policies: Vec<String>,
    #[arg(long)]
    pub pars_model: Option<PathBuf>,
    #[arg(long)]
    pub pointwise_model: Option<PathBuf>,
    #[arg(long)]
    pub listwise_model: Option<PathBuf>,
    /// Comma-separated multipliers of the base Poisson rate.
    #[arg(long, value_delimiter = ',')]
    pub rate_multipliers: Vec<f64>,
    /// Comma-separated seeds (overrides --seed).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub burst: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn base_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load_or_default(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn apply_workload_flags(cfg: &mut ExperimentConfig, f: &WorkloadFlags) {
    if f.data.is_some() {
        cfg.workload.data = f.data.clone();
    }
    if f.trace.is_some() {
        cfg.workload.trace = f.trace.clone();
    }
    set(&mut cfg.workload.arrivals, f.arrivals.clone());
}

fn apply_sim_flags(cfg: &mut ExperimentConfig, f: &SimFlags) {
    let s = &mut cfg.simulation;
    set(&mut s.batch_limit, f.batch_limit);
    set(&mut s.batching, f.batching.clone());
    set(&mut s.starvation_threshold, f.starvation_threshold);
    set(&mut s.t_base, f.t_base);
    set(&mut s.t_decode, f.t_decode);
    set(&mut s.t_prefill_token, f.t_prefill_token);
    s.event_log |= f.event_log;
}

fn echo(command: &str, cfg: &ExperimentConfig, out: Option<&Path>) {
    println!("# pars {command}");
    if let Some(out) = out {
        println!("# out = {}", out.display());
    }
    print!("{}", cfg.to_toml());
    println!("# ---");
}

fn require_out(common: &CommonArgs) -> Result<PathBuf> {
    common.out.clone().context("--out is required")
}

pub fn run_cli(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenWorkload(a) => cmd_gen_workload(&a),
        Command::Train(a) => cmd_train(&a),
        Command::EvalPredictor(a) => cmd_eval_predictor(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
}

pub fn cmd_gen_workload(args: &GenWorkloadArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    let w = &mut cfg.workload;
    set(&mut w.n, args.n);
    set(&mut w.dist, args.dist.clone());
    set(&mut w.min_len, args.min_len);
    set(&mut w.max_len, args.max_len);
    set(&mut w.levels, args.levels);
    set(&mut w.noise, args.noise);
    set(&mut w.hidden_sigma, args.hidden_sigma);
    set(&mut w.samples, args.samples);
    set(&mut w.filler_words, args.filler_words);
    if args.embedding_dim.is_some() {
        w.embedding_dim = args.embedding_dim;
    }
    if let Some(style) = &args.style {
        w.style = match style.as_str() {
            "standard" => WorkloadStyle::Standard,
            "reasoning" => WorkloadStyle::Reasoning,
            other => bail!("--style: unknown style {other:?} (standard, reasoning)"),
        };
    }
    set(&mut w.arrivals, args.arrivals.clone());
    cfg.validate()?;
    let synth = cfg.workload.synth_config()?;
    let mode = cfg.workload.arrival_mode()?;
    let out = require_out(&args.common)?;
    let seed = cfg.seeds[0];
    echo("gen-workload", &cfg, Some(&out));

    let dataset = synthesize_dataset(&synth, seed)?;
    let trace = generate_arrivals(&dataset.records, mode, seed)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    dataset.write(out.join("dataset.jsonl"))?;
    trace.write(out.join("trace.txt"))?;
    fs::write(out.join(CONFIG_ECHO_FILE), cfg.to_toml())?;

    let mut lens: Vec<f64> = dataset
        .records
        .iter()
        .map(|r| r.output_len as f64)
        .collect();
    lens.sort_by(f64::total_cmp);
    println!(
        "records={} arrivals={} mode={} output_len p50={} p90={} p99={} max={}",
        dataset.len(),
        trace.len(),
        mode,
        nearest_rank(&lens, 50),
        nearest_rank(&lens, 90),
        nearest_rank(&lens, 99),
        lens.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

/// Deterministic shuffled split into (train, validation).
pub fn split_dataset(dataset: &Dataset, val_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
    let n_val = ((dataset.len() as f64) * val_fraction).round() as usize;
    let pick = |ids: &[usize]| Dataset {
        header: dataset.header.clone(),
        records: ids.iter().map(|&i| dataset.records[i].clone()).collect(),
    };
    (pick(&idx[n_val..]), pick(&idx[..n_val]))
}

const SPLIT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    if args.data.is_some() {
        cfg.workload.data = args.data.clone();
    }
    let t = &mut cfg.training;
    if let Some(o) = &args.objective {
        t.objective = o.parse().context("--objective")?;
    }
    if args.delta.is_some() {
        t.delta = args.delta;
    }
    set(&mut t.margin, args.margin);
    set(&mut t.epochs, args.epochs);
    set(&mut t.batch_size, args.batch_size);
    set(&mut t.learning_rate, args.lr);
    if args.examples_per_epoch.is_some() {
        t.examples_per_epoch = args.examples_per_epoch;
    }
    if let Some(f) = &args.features {
        t.features = match f.as_str() {
            "hashed" => FeatureChoice::Hashed,
            "embedding" => FeatureChoice::Embedding,
            other => bail!("--features: unknown kind {other:?} (hashed, embedding)"),
        };
    }
    set(&mut t.dim, args.dim);
    set(&mut t.val_fraction, args.val_fraction);
    cfg.validate()?;
    let out = require_out(&args.common)?;
    let seed = cfg.seeds[0];

    let dataset = load_dataset(cfg.workload.data_path()?, None)?;
    let train_cfg =
        cfg.training
            .train_config(seed, dataset.header.style, dataset.header.embedding_dim)?;
    // Make the echo show the delta actually used.
    cfg.training.delta = Some(train_cfg.delta);
    echo("train", &cfg, Some(&out));

    let (train_set, val_set) = split_dataset(&dataset, cfg.training.val_fraction, seed);
    let model = train(&train_set.records, &train_cfg)?;
    for (epoch, loss) in model.loss_trace.iter().enumerate() {
        println!("epoch {epoch}: mean loss {loss:.6}");
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    model.save(&out)?;
    println!(
        "wrote {} (objective={}, train={}, validation={})",
        out.display(),
        model.objective,
        train_set.len(),
        val_set.len()
    );
    if val_set.len() >= 2 {
        match evaluate(&model, &val_set.records) {
            Ok(t) => println!("validation tau_b = {:.4}", t.tau_b),
            Err(Error::DegenerateRanking) => {
                println!("validation tau_b = n/a (degenerate ranking)")
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub predictor: String,
    pub objective: Option<Objective>,
    pub n: usize,
    pub tau_b: Option<f64>,
    pub warning: Option<String>,
}

pub fn cmd_eval_predictor(args: &EvalArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    if args.data.is_some() {
        cfg.workload.data = args.data.clone();
    }
    cfg.validate()?;
    if args.models.is_empty() && !args.oracle {
        bail!("nothing to evaluate: pass --model FILE and/or --oracle");
    }
    echo("eval-predictor", &cfg, args.common.out.as_deref());
    let dataset = load_dataset(cfg.workload.data_path()?, None)?;

    let mut scorers: Vec<(String, Option<Objective>, Box<dyn Scorer>)> = Vec::new();
    if args.oracle {
        scorers.push((
            "oracle".into(),
            None,
            Box::new(OracleScorer::from_dataset(&dataset)),
        ));
    }
    for path in &args.models {
        let model = TrainedModel::load(path)?;
        scorers.push((
            path.display().to_string(),
            Some(model.objective),
            Box::new(model),
        ));
    }

    let mut rows = Vec::new();
    for (name, objective, scorer) in &scorers {
        let (tau_b, warning) = match evaluate(scorer.as_ref(), &dataset.records) {
            Ok(t) => (Some(t.tau_b), None),
            Err(e @ Error::DegenerateRanking) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        };
        rows.push(EvalRow {
            predictor: name.clone(),
            objective: *objective,
            n: dataset.len(),
            tau_b,
            warning,
        });
    }

    println!(
        "{:<40} {:<18} {:>7} {:>8}",
        "predictor", "objective", "n", "tau_b"
    );
    for r in &rows {
        let obj = r
            .objective
            .map(|o| o.to_string())
            .unwrap_or_else(|| "-".into());
        match (r.tau_b, &r.warning) {
            (Some(t), _) => println!("{:<40} {:<18} {:>7} {:>8.4}", r.predictor, obj, r.n, t),
            (None, Some(w)) => println!("{:<40} {:<18} {:>7} warning: {w}", r.predictor, obj, r.n),
            (None, None) => unreachable!(),
        }
    }
    if let Some(out) = &args.common.out {
        fs::create_dir_all(out)?;
        write_json(&out.join("eval.json"), &rows)?;
        fs::write(out.join(CONFIG_ECHO_FILE), cfg.to_toml())?;
    }
    Ok(())
}

/// A named arrival trace within a sweep.
struct Scenario {
    name: String,
    seed: u64,
    trace: ArrivalTrace,
}

fn load_inputs(cfg: &ExperimentConfig) -> Result<Dataset> {
    Ok(load_dataset(cfg.workload.data_path()?, None)?)
}

fn scenarios(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    multipliers: &[f64],
) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    if let Some(path) = &cfg.workload.trace {
        let trace = ArrivalTrace::load(path)?;
        trace.check_resolves(dataset)?;
        for &seed in &cfg.seeds {
            out.push(Scenario {
                name: "trace".into(),
                seed,
                trace: trace.clone(),
            });
        }
        return Ok(out);
    }
    match cfg.workload.arrival_mode()? {
        ArrivalMode::Burst => {
            let n = cfg.sweep.burst.min(dataset.len());
            for &seed in &cfg.seeds {
                out.push(Scenario {
                    name: format!("burst-{n}"),
                    seed,
                    trace: generate_arrivals(&dataset.records[..n], ArrivalMode::Burst, seed)?,
                });
            }
        }
        ArrivalMode::Poisson { rate } => {
            let multipliers = if multipliers.is_empty() {
                &[1.0][..]
            } else {
                multipliers
            };
            for &m in multipliers {
                let mode = ArrivalMode::Poisson { rate: rate * m };
                for &seed in &cfg.seeds {
                    out.push(Scenario {
                        name: format!("poisson-x{m}"),
                        seed,
                        trace: generate_arrivals(&dataset.records, mode, seed)?,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn sim_config(cfg: &ExperimentConfig, policy: Policy, seed: u64) -> Result<SimConfig> {
    let s = &cfg.simulation;
    let mut sim = SimConfig::new(policy);
    sim.cost = s.cost();
    sim.batching = s.batching()?;
    sim.policy.batch_limit = s.batch_limit;
    sim.policy.starvation_threshold = s.starvation_threshold;
    sim.seed = seed;
    sim.record_events = s.event_log;
    sim.validate()?;
    Ok(sim)
}

/// Builds a policy; learned kinds need a model file.
fn build_policy(
    kind: PolicyKind,
    model: Option<&Path>,
    dataset: &Dataset,
) -> Result<(Policy, Option<Arc<TrainedModel>>)> {
    Ok(match kind {
        PolicyKind::Fcfs => (Policy::fcfs(), None),
        PolicyKind::Oracle => (Policy::oracle(&dataset.records), None),
        learned => {
            let path = model.with_context(|| format!("policy {learned} needs a model file"))?;
            let model = Arc::new(TrainedModel::load(path)?);
            (Policy::with_scorer(learned, model.clone()), Some(model))
        }
    })
}

fn tau_for(
    kind: PolicyKind,
    model: Option<&TrainedModel>,
    dataset: &Dataset,
    trace: &ArrivalTrace,
) -> Option<f64> {
    let index = dataset.index();
    let records: Vec<_> = trace
        .entries
        .iter()
        .filter_map(|e| index.get(e.prompt_id.as_str()).map(|r| (*r).clone()))
        .collect();
    let scorer: &dyn Scorer = match (kind, model) {
        (PolicyKind::Fcfs, _) => return None,
        (PolicyKind::Oracle, _) => {
            return evaluate(&OracleScorer::new(&records), &records)
                .ok()
                .map(|t| t.tau_b)
        }
        (_, Some(m)) => m,
        (_, None) => return None,
    };
    evaluate(scorer, &records).ok().map(|t| t.tau_b)
}

fn summarize(
    scenario: &Scenario,
    result: &SimResult,
    speedup_vs_fcfs: Option<f64>,
    tau_b: Option<f64>,
) -> Result<RunSummary> {
    let s = latency_summary(result)?;
    Ok(RunSummary {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        policy: result.policy.clone(),
        n_requests: s.count,
        mean_per_token_ms: s.mean_per_token_ms,
        p90_per_token_ms: s.p90_per_token_ms,
        speedup_vs_fcfs,
        tau_b,
        iterations: result.iterations,
        makespan_s: result.makespan,
    })
}

fn run_dir(out: &Path, scenario: &Scenario, policy: &str) -> PathBuf {
    out.join(&scenario.name)
        .join(format!("{policy}-seed{}", scenario.seed))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    apply_workload_flags(&mut cfg, &args.workload);
    apply_sim_flags(&mut cfg, &args.sim);
    set(&mut cfg.sweep.burst, args.burst);
    let kind: PolicyKind = args.policy.parse()?;
    cfg.policies.list = vec![kind];
    match kind {
        PolicyKind::Pars => cfg.policies.pars_model = args.model.clone(),
        PolicyKind::Pointwise => cfg.policies.pointwise_model = args.model.clone(),
        PolicyKind::Listwise => cfg.policies.listwise_model = args.model.clone(),
        _ => {}
    }
    cfg.validate()?;
    let out = require_out(&args.common)?;
    echo("simulate", &cfg, Some(&out));

    let dataset = load_inputs(&cfg)?;
    let (policy, model) = build_policy(kind, cfg.policies.model_for(kind), &dataset)?;
    fs::create_dir_all(&out)?;
    fs::write(out.join(CONFIG_ECHO_FILE), cfg.to_toml())?;
    for scenario in scenarios(&cfg, &dataset, &[])? {
        let sim = sim_config(&cfg, policy.clone(), scenario.seed)?;
        let result = run(&scenario.trace, &dataset, &sim)?;
        let tau = tau_for(kind, model.as_deref(), &dataset, &scenario.trace);
        let summary = summarize(&scenario, &result, None, tau)?;
        write_run(&run_dir(&out, &scenario, policy.name()), &result, &summary)?;
        println!(
            "scenario={} seed={} policy={} n_requests={} mean_per_token_ms={:.4} p90_per_token_ms={:.4}",
            summary.scenario,
            summary.seed,
            summary.policy,
            summary.n_requests,
            summary.mean_per_token_ms,
            summary.p90_per_token_ms
        );
    }
    Ok(())
}

/// One comparison-table row; `seed` is `None` for the multi-seed mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub seed: Option<u64>,
    pub policy: String,
    pub n_requests: usize,
    pub mean_per_token_ms: f64,
    pub p90_per_token_ms: f64,
    pub speedup_vs_fcfs: Option<f64>,
    pub tau_b: Option<f64>,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let mut cfg = base_config(&args.common)?;
    apply_workload_flags(&mut cfg, &args.workload);
    apply_sim_flags(&mut cfg, &args.sim);
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds.clone();
    }
    if !args.policies.is_empty() {
        cfg.policies.list = args
            .policies
            .iter()
            .map(|p| p.parse::<PolicyKind>())
            .collect::<crate::Result<_>>()?;
    }
    for (slot, flag) in [
        (&mut cfg.policies.pars_model, &args.pars_model),
        (&mut cfg.policies.pointwise_model, &args.pointwise_model),
        (&mut cfg.policies.listwise_model, &args.listwise_model),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    if !args.rate_multipliers.is_empty() {
        cfg.sweep.rate_multipliers = args.rate_multipliers.clone();
    }
    set(&mut cfg.sweep.burst, args.burst);
    cfg.validate()?;
    if cfg.policies.list.len() < 2 {
        bail!("compare needs at least 2 policies");
    }
    let out = require_out(&args.common)?;
    echo("compare", &cfg, Some(&out));

    let dataset = load_inputs(&cfg)?;
    let built = cfg
        .policies
        .list
        .iter()
        .map(|&k| build_policy(k, cfg.policies.model_for(k), &dataset).map(|(p, m)| (k, p, m)))
        .collect::<Result<Vec<_>>>()?;
    let policies: Vec<Policy> = built.iter().map(|(_, p, _)| p.clone()).collect();

    fs::create_dir_all(&out)?;
    fs::write(out.join(CONFIG_ECHO_FILE), cfg.to_toml())?;
    let mut rows = Vec::new();
    for scenario in scenarios(&cfg, &dataset, &cfg.sweep.rate_multipliers)? {
        let base = sim_config(&cfg, Policy::fcfs(), scenario.seed)?;
        let cmp = compare_policies(&scenario.trace, &dataset, &base, &policies)?;
        for ((kind, _, model), (row, result)) in built.iter().zip(cmp.rows.iter().zip(&cmp.results))
        {
            let tau = tau_for(*kind, model.as_deref(), &dataset, &scenario.trace);
            let summary = summarize(&scenario, result, row.speedup_vs_fcfs, tau)?;
            write_run(&run_dir(&out, &scenario, &row.policy), result, &summary)?;
            rows.push(ComparisonRow {
                scenario: scenario.name.clone(),
                seed: Some(scenario.seed),
                policy: row.policy.clone(),
                n_requests: row.n_requests,
                mean_per_token_ms: row.mean_per_token_ms,
                p90_per_token_ms: row.p90_per_token_ms,
                speedup_vs_fcfs: row.speedup_vs_fcfs,
                tau_b: tau,
            });
        }
    }
    if cfg.seeds.len() > 1 {
        rows.extend(seed_means(&rows));
    }
    rows.sort_by(|a, b| {
        (&a.scenario, &a.policy, a.seed.is_none(), a.seed).cmp(&(
            &b.scenario,
            &b.policy,
            b.seed.is_none(),
            b.seed,
        ))
    });

    write_comparison_csv(&out.join("comparison.csv"), &rows)?;
    write_json(&out.join("comparison.json"), &rows)?;
    print_comparison(&rows);
    Ok(())
}

fn seed_means(rows: &[ComparisonRow]) -> Vec<ComparisonRow> {
    let mut groups: BTreeMap<(String, String), Vec<&ComparisonRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.scenario.clone(), r.policy.clone()))
            .or_default()
            .push(r);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let opt_mean = |v: Vec<Option<f64>>| -> Option<f64> {
        let v: Option<Vec<f64>> = v.into_iter().collect();
        v.map(|v| mean(&v))
    };
    groups
        .into_iter()
        .map(|((scenario, policy), g)| ComparisonRow {
            scenario,
            seed: None,
            policy,
            n_requests: g[0].n_requests,
            mean_per_token_ms: mean(&g.iter().map(|r| r.mean_per_token_ms).collect::<Vec<_>>()),
            p90_per_token_ms: mean(&g.iter().map(|r| r.p90_per_token_ms).collect::<Vec<_>>()),
            speedup_vs_fcfs: opt_mean(g.iter().map(|r| r.speedup_vs_fcfs).collect()),
            tau_b: opt_mean(g.iter().map(|r| r.tau_b).collect()),
        })
        .collect()
}

fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn print_comparison(rows: &[ComparisonRow]) {
    let mut current = None;
    for r in rows {
        if current != Some(&r.scenario) {
            current = Some(&r.scenario);
            println!();
            println!("== {} ==", r.scenario);
            println!(
                "{:<10} {:>6} {:>8} {:>12} {:>12} {:>9} {:>7}",
                "policy", "seed", "n", "mean_ms", "p90_ms", "speedup", "tau_b"
            );
        }
        let opt =
            |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<10} {:>6} {:>8} {:>12.4} {:>12.4} {:>9} {:>7}",
            r.policy,
            r.seed
                .map(|s| s.to_string())
                .unwrap_or_else(|| "mean".into()),
            r.n_requests,
            r.mean_per_token_ms,
            r.p90_per_token_ms,
            opt(r.speedup_vs_fcfs, 3),
            opt(r.tau_b, 4)
        );
    }
}
