//! Command-line grammar and the flag > config file > default resolution.

use clap::{Args, Parser, Subcommand, ValueEnum};
use pdrl_core::heads::HeadKind;
use pdrl_core::report::Target;
use pdrl_core::score::Aggregate;
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "pdrl",
    version,
    about = "Descriptor-based residual learning and baselines for MLIP uncertainty"
)]
pub struct Cli {
    /// Optional JSON config file; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Generate synthetic train/val/test/ood datasets.
    Gen(GenArgs),
    /// Train a residual head on a dataset.
    Train(TrainArgs),
    /// Fit a kNN or GMM baseline scorer.
    Baseline(BaselineArgs),
    /// Score a dataset with any saved model.
    Score(ScoreArgs),
    /// Score a dataset by ensemble disagreement.
    EnsembleScore(EnsembleScoreArgs),
    /// Spearman and AUC of scores against true errors.
    Eval(EvalArgs),
    /// Out-of-distribution detection report.
    Ood(OodArgs),
    /// Project descriptors onto principal axes and export them.
    Pca(PcaArgs),
}

#[derive(Args)]
pub struct GenArgs {
    /// Output directory for train.jsonl, val.jsonl, test.jsonl, ood.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub d_desc: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub n_ood: Option<usize>,
    #[arg(long)]
    pub atoms_min: Option<usize>,
    #[arg(long)]
    pub atoms_max: Option<usize>,
    #[arg(long)]
    pub ood_shift: Option<f64>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Head to train: e-norm, e-diff, f-norm or f-diff.
    #[arg(long, value_parser = parse_head)]
    pub head: HeadKind,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Model output path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Batch size: structures for energy heads, atoms for force heads.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub min_lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    /// Skip descriptor standardization.
    #[arg(long)]
    pub no_standardize: bool,
    /// Also write the epoch history (JSON) here.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Knn,
    Gmm,
}

#[derive(Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighbor count for knn.
    #[arg(long)]
    pub k: Option<usize>,
    /// Mixture size for gmm.
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Scores CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Structure-level aggregation of per-atom scores: mean or max.
    #[arg(long, value_parser = parse_aggregate)]
    pub aggregate: Option<Aggregate>,
}

#[derive(Args)]
pub struct EnsembleScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Scores CSV produced by `score` or `ensemble-score`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_target)]
    pub target: Target,
    /// Report output path (CSV; a JSON twin is written alongside).
    #[arg(long)]
    pub out: PathBuf,
    /// Low-error class fraction for the AUC split.
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Aggregate force pairs per structure instead of per atom.
    #[arg(long)]
    pub per_structure: bool,
    /// Scorer name for report rows; defaults to the scores file stem.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Args)]
pub struct OodArgs {
    /// In-domain scores CSV.
    #[arg(long)]
    pub scores: PathBuf,
    /// In-domain dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// OOD scores CSVs, one per OOD dataset, same order.
    #[arg(long = "ood-scores", required = true, num_args = 1..)]
    pub ood_scores: Vec<PathBuf>,
    /// OOD datasets.
    #[arg(long = "ood-data", required = true, num_args = 1..)]
    pub ood_data: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_aggregate)]
    pub aggregate: Option<Aggregate>,
    /// Compute Spearman on the OOD side only instead of the pooled union.
    #[arg(long)]
    pub ood_only: bool,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Args)]
pub struct PcaArgs {
    /// Training dataset the axes are fitted on.
    #[arg(long)]
    pub data: PathBuf,
    /// Additional datasets to project.
    #[arg(long = "others", num_args = 1..)]
    pub others: Vec<PathBuf>,
    /// Optional scores CSV; per-atom scores are attached where ids match.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub components_pca: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_head(s: &str) -> Result<HeadKind, String> {
    HeadKind::parse(s).map_err(|e| e.to_string())
}

fn parse_target(s: &str) -> Result<Target, String> {
    Target::parse(s).map_err(|e| e.to_string())
}

fn parse_aggregate(s: &str) -> Result<Aggregate, String> {
    Aggregate::parse(s).map_err(|e| e.to_string())
}

/// Optional JSON config file; every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub d_desc: Option<usize>,
    pub n_train: Option<usize>,
    pub n_val: Option<usize>,
    pub n_test: Option<usize>,
    pub n_ood: Option<usize>,
    pub atoms_min: Option<usize>,
    pub atoms_max: Option<usize>,
    pub ood_shift: Option<f64>,
    pub noise_scale: Option<f64>,
    pub lr: Option<f64>,
    pub patience: Option<usize>,
    pub lr_decay: Option<f64>,
    pub min_lr: Option<f64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub hidden_width: Option<usize>,
    pub k: Option<usize>,
    pub components: Option<usize>,
    pub aggregate: Option<String>,
    pub quantile: Option<f64>,
    pub components_pca: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: Option<&std::path::Path>) -> pdrl_core::Result<ConfigFile> {
        match path {
            None => Ok(ConfigFile::default()),
            Some(p) => {
                let bytes = std::fs::read(p)?;
                serde_json::from_slice(&bytes).map_err(|e| {
                    pdrl_core::Error::InvalidInput(format!("config {}: {e}", p.display()))
                })
            }
        }
    }

    pub fn aggregate(&self) -> pdrl_core::Result<Option<Aggregate>> {
        self.aggregate.as_deref().map(Aggregate::parse).transpose()
    }
}

/// Flag beats config beats default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}
