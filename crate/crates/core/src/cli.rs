//! The `tart` command line: dataset generation, tokenization, training,
//! evaluation and mode comparison.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 invalid input,
//! 3 degenerate statistics (constant target or prediction column).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig, DEFAULT_CONFIG_TOML};
use crate::graph::{
    generate_synthetic, read_dataset, split_dataset, write_dataset, DatasetError, DatasetSplit, LabeledGraph,
    SyntheticSpec, TARGET_NAMES,
};
use crate::harness::{
    compare_modes, evaluate_predictor, train_predictor, HarnessError, PredictorMode, TrainConfig, TrainedPredictor,
    TrialData,
};
use crate::nnet::{load_model_with_meta, save_model_with_meta, NnetError, TargetStats};
use crate::tokenizer::{one_hot_size, write_token_file, TokenizerConfig, TokenizerError};

#[derive(Debug, Parser)]
#[command(name = "tart", version, about = "Graph-token transformer performance predictor")]
pub struct Cli {
    /// Worker threads for tokenization and parallel trials (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labelled corpus of random DAGs as JSONL.
    Gen(GenArgs),
    /// Convert a JSONL corpus into the binary token format.
    Tokenize(TokenizeArgs),
    /// Train one predictor and write its checkpoint and history.
    Train(TrainArgs),
    /// Print per-target Kendall tau of a checkpoint on a labelled corpus.
    Eval(EvalArgs),
    /// Run the node-only baseline and the token encoder over several seeds.
    Compare(CompareArgs),
    /// Print the reference configuration with every default.
    Config,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 400)]
    pub count: usize,
    #[arg(long, default_value_t = 16)]
    pub max_nodes: usize,
    /// Upper bound of the per-graph edge probability, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    /// Standard deviation of the Gaussian label noise.
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, env = "TART_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Lap,
    NodeOnly,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Lap)]
    pub mode: ModeArg,
    /// Eigenvector columns per node.
    #[arg(long, default_value_t = 3)]
    pub d_p: usize,
    /// Config file supplying spectral and tokenizer settings; `--d-p` wins.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    Tart,
    PureTransformer,
}

impl From<PredictorArg> for PredictorMode {
    fn from(m: PredictorArg) -> Self {
        match m {
            PredictorArg::Tart => PredictorMode::Tart,
            PredictorArg::PureTransformer => PredictorMode::PureTransformer,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, env = "TART_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_model: PathBuf,
    /// History CSV: `epoch,loss,tau_clean,tau_noisy,tau_inf,tau_conv`.
    #[arg(long)]
    pub history: PathBuf,
    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides `train.mode`.
    #[arg(long, value_enum)]
    pub mode: Option<PredictorArg>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labelled JSONL corpus; every record is scored.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides `train.epochs` for both modes.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides `train.n_trials`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Base seed; trials use seed, seed + 1, ...
    #[arg(long, env = "TART_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Long-format CSV `target,mode,seed,tau`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Both experiment reports as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Run the token encoder in both slots (a control whose difference is 0).
    #[arg(long)]
    pub same_mode: bool,
}

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => Self::runtime(e.to_string()),
            _ => Self::invalid(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::runtime(e.to_string()),
            ConfigError::Parse(_) => Self::invalid(e.to_string()),
        }
    }
}

impl From<NnetError> for CliError {
    fn from(e: NnetError) -> Self {
        match e {
            NnetError::StatsDegenerate { .. } => Self { code: 3, message: e.to_string() },
            NnetError::InvalidConfig(_) | NnetError::CorruptFile(_) | NnetError::VersionMismatch { .. } => {
                Self::invalid(e.to_string())
            }
            _ => Self::runtime(e.to_string()),
        }
    }
}

impl From<TokenizerError> for CliError {
    fn from(e: TokenizerError) -> Self {
        Self::runtime(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_degenerate() {
            return Self {
                code: 3,
                message: format!("{e} (a constant column has no ranking, so Kendall tau is undefined)"),
            };
        }
        match e {
            HarnessError::Dataset(d) => d.into(),
            HarnessError::Nnet(n) => n.into(),
            HarnessError::Unlabeled { .. }
            | HarnessError::InvalidConfig(_)
            | HarnessError::ConfigMismatch(_)
            | HarnessError::EmptySplit(_) => Self::invalid(e.to_string()),
            other => Self::runtime(other.to_string()),
        }
    }
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

/// Runs a parsed command and returns its standard output.
pub fn run(cli: Cli) -> Result<String, CliError> {
    if cli.jobs > 0 {
        // Fails only if a pool already exists, which keeps the earlier size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Tokenize(a) => cmd_tokenize(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Config => Ok(DEFAULT_CONFIG_TOML.to_string()),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn histogram(values: impl Iterator<Item = usize>) -> String {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    counts.iter().map(|(k, c)| format!("{k}:{c}")).collect::<Vec<_>>().join(" ")
}

pub fn cmd_gen(a: &GenArgs) -> Result<String, CliError> {
    let spec = SyntheticSpec { count: a.count, max_nodes: a.max_nodes, edge_density: a.density, noise_sigma: a.noise };
    let records = generate_synthetic(&spec, a.seed).map_err(|e| CliError::invalid(e.to_string()))?;
    write_dataset(&records, &a.out)?;
    let mut out = String::new();
    writeln!(out, "wrote {} graphs to {}", records.len(), a.out.display()).unwrap();
    writeln!(out, "nodes  {}", histogram(records.iter().map(|r| r.graph.num_nodes()))).unwrap();
    writeln!(out, "edges  {}", histogram(records.iter().map(|r| r.graph.num_edges()))).unwrap();
    Ok(out)
}

pub fn cmd_tokenize(a: &TokenizeArgs) -> Result<String, CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let mut train = cfg.train_config(0);
    train.tokenizer = TokenizerConfig { d_p: a.d_p, ..train.tokenizer };
    train.spectral.d_p = a.d_p;
    train.mode = match a.mode {
        ModeArg::Lap => PredictorMode::Tart,
        ModeArg::NodeOnly => PredictorMode::PureTransformer,
    };
    let records = read_dataset(&a.input)?;
    let tokens = train.tokenize(&records)?;

    let mut out = String::new();
    let (mut token_cells, mut one_hot_cells) = (0usize, 0usize);
    for (r, m) in records.iter().zip(&tokens) {
        writeln!(out, "{} {} x {}", r.id, m.rows, m.cols).unwrap();
        token_cells += m.rows * m.cols;
        one_hot_cells += one_hot_size(r.graph.num_nodes());
    }
    writeln!(
        out,
        "{} graphs, {} token cells vs {} one-hot cells (ratio {:.4})",
        records.len(),
        token_cells,
        one_hot_cells,
        token_cells as f64 / one_hot_cells as f64
    )
    .unwrap();
    let named: Vec<(String, _)> = records.iter().map(|r| r.id.clone()).zip(tokens).collect();
    write_token_file(&a.out, &named)?;
    Ok(out)
}

/// Everything needed besides the weights to use a saved model.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    train_config: TrainConfig,
    target_stats: TargetStats,
}

fn split_for(cfg: &RunConfig, records: &[LabeledGraph]) -> Result<DatasetSplit, CliError> {
    Ok(split_dataset(records, cfg.data.n_train(records.len()), cfg.data.split_seed)?)
}

fn tau_cell(t: Option<f64>) -> String {
    t.map_or_else(|| "nan".to_string(), |v| v.to_string())
}

pub fn cmd_train(a: &TrainArgs) -> Result<String, CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(m) = a.mode {
        cfg.train.mode = m.into();
    }
    let records = read_dataset(&a.data)?;
    let split = split_for(&cfg, &records)?;
    let trained = train_predictor(&split, &cfg.train_config(a.seed))?;

    let meta = CheckpointMeta { train_config: trained.config, target_stats: trained.stats.clone() };
    save_model_with_meta(&trained.model, &serde_json::to_value(&meta).expect("plain data"), &a.out_model)?;
    let mut csv = String::from("epoch,loss,tau_clean,tau_noisy,tau_inf,tau_conv\n");
    for h in &trained.history {
        let taus: Vec<String> = h.test_tau.iter().map(|t| tau_cell(*t)).collect();
        writeln!(csv, "{},{},{}", h.epoch, h.loss, taus.join(",")).unwrap();
    }
    std::fs::write(&a.history, csv)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", a.history.display())))?;

    let last = trained.history.last().expect("epochs >= 1");
    let mut out = String::new();
    writeln!(
        out,
        "trained {} for {} epochs on {} graphs (test {}); final loss {:.6}",
        trained.config.mode,
        trained.history.len(),
        split.train.len(),
        split.test.len(),
        last.loss
    )
    .unwrap();
    for (name, t) in TARGET_NAMES.iter().zip(last.test_tau) {
        writeln!(out, "  {name:<18} test tau {}", tau_cell(t)).unwrap();
    }
    Ok(out)
}

pub fn load_trained(path: &Path) -> Result<TrainedPredictor, CliError> {
    let (model, meta) = load_model_with_meta(path)?;
    let meta: CheckpointMeta = serde_json::from_value(meta)
        .map_err(|e| CliError::invalid(format!("{}: checkpoint metadata: {e}", path.display())))?;
    Ok(TrainedPredictor { model, stats: meta.target_stats, config: meta.train_config, history: Vec::new() })
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String, CliError> {
    let predictor = load_trained(&a.model)?;
    let records = read_dataset(&a.data)?;
    let taus = evaluate_predictor(&predictor, &records)?;
    let map: serde_json::Map<String, serde_json::Value> =
        TARGET_NAMES.iter().zip(taus).map(|(n, t)| (n.to_string(), serde_json::json!(t))).collect();
    Ok(serde_json::to_string_pretty(&map).expect("plain data") + "\n")
}

pub fn cmd_compare(a: &CompareArgs) -> Result<String, CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(t) = a.trials {
        cfg.train.n_trials = t;
    }
    let records = read_dataset(&a.data)?;
    let n_train = cfg.data.n_train(records.len());
    let fixed;
    let data = if cfg.data.resplit_per_trial {
        TrialData::Resplit { records: &records, n_train }
    } else {
        fixed = split_for(&cfg, &records)?;
        TrialData::Fixed(&fixed)
    };
    let base = cfg.train_config(a.seed);
    let pure_mode = if a.same_mode { PredictorMode::Tart } else { PredictorMode::PureTransformer };
    let pure = TrainConfig { mode: pure_mode, ..base };
    let tart = TrainConfig { mode: PredictorMode::Tart, ..base };
    let cmp = compare_modes(data, &pure, &tart, cfg.train.n_trials, a.seed)?;

    let write = |path: &Path, text: &str| {
        std::fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
    };
    if let Some(p) = &a.csv {
        write(p, &cmp.to_csv())?;
    }
    if let Some(p) = &a.json {
        write(p, &(serde_json::to_string_pretty(&cmp).expect("plain data") + "\n"))?;
    }
    Ok(cmp.to_table())
}
