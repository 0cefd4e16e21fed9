use std::path::PathBuf;

use aeon_core::config::RunConfig;
use aeon_core::corpus::{QualityThresholds, RankKey, SemanticThresholds, Source};
use aeon_core::semeval::{DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, DEFAULT_RADIUS};
use aeon_core::syneval::{Aggregation, DEFAULT_PHI};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Score, evaluate, select and rank generated NLP test cases.
///
/// All machine-readable output (JSONL / JSON) goes to standard output or
/// --out; progress and summaries go to standard error.
///
/// Exit codes: 0 success, 1 fatal error, 2 some records failed.
#[derive(Debug, Parser)]
#[command(name = "aeon", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every record of a corpus JSONL file.
    Score(ScoreCmd),
    /// Grade scores against human annotations (AP, AUC, PCC).
    Evaluate(EvaluateCmd),
    /// Keep scored records passing both thresholds.
    Select(SelectCmd),
    /// Sort scored records in descending order of a key.
    Rank(RankCmd),
    /// Proportions of inconsistent, unnatural and false-alarm records.
    Summarize(SummarizeCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Reference,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Arithmetic,
    Geometric,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Arithmetic => Aggregation::Arithmetic,
            AggregationArg::Geometric => Aggregation::Geometric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankKeyArg {
    Semantic,
    Naturalness,
    Mean,
}

impl From<RankKeyArg> for RankKey {
    fn from(k: RankKeyArg) -> Self {
        match k {
            RankKeyArg::Semantic => RankKey::Semantic,
            RankKeyArg::Naturalness => RankKey::Naturalness,
            RankKeyArg::Mean => RankKey::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Consistency,
    Naturalness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Human,
    Automatic,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Human => Source::Human,
            SourceArg::Automatic => Source::Automatic,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    /// Semantic threshold for sentiment-analysis records.
    #[arg(long, default_value_t = 0.87)]
    pub threshold_sa: f64,
    /// Semantic threshold for natural-language-inference records.
    #[arg(long, default_value_t = 0.90)]
    pub threshold_nli: f64,
    /// Semantic threshold for semantic-equivalence records.
    #[arg(long, default_value_t = 0.91)]
    pub threshold_se: f64,
    /// Naturalness threshold for every record.
    #[arg(long, default_value_t = 0.21)]
    pub threshold_nat: f64,
}

impl ThresholdArgs {
    pub fn thresholds(&self) -> QualityThresholds {
        QualityThresholds {
            semantic: SemanticThresholds {
                sa: self.threshold_sa,
                nli: self.threshold_nli,
                se: self.threshold_se,
            },
            naturalness: self.threshold_nat,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Provider for embeddings and masked-token probabilities.
    #[arg(long, value_enum, default_value_t = BackendKind::Reference)]
    pub backend: BackendKind,
    /// Model server base URL for --backend remote.
    #[arg(long, env = "AEON_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Reference backend seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Reference backend embedding dimension.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Remote request timeout in milliseconds.
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    /// Largest number of requests per remote batch call.
    #[arg(long, default_value_t = 32)]
    pub max_batch: usize,
    /// Largest number of remote requests in flight at once.
    #[arg(long, default_value_t = 4)]
    pub max_inflight: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ScoringArgs {
    /// Weight of the smallest patch similarity.
    #[arg(long, default_value_t = DEFAULT_LAMBDA1)]
    pub lambda1: f64,
    /// Weight of the mean patch similarity.
    #[arg(long, default_value_t = DEFAULT_LAMBDA2)]
    pub lambda2: f64,
    /// Weight of the least likely token in the naturalness score.
    #[arg(long, default_value_t = DEFAULT_PHI)]
    pub phi: f64,
    /// Patch half-width in tokens.
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: usize,
    /// How token probabilities are averaged.
    #[arg(long, value_enum, default_value_t = AggregationArg::Arithmetic)]
    pub aggregation: AggregationArg,
}

#[derive(Debug, Args)]
pub struct ScoreCmd {
    /// Corpus JSONL file.
    pub corpus: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Ranking key recorded in the config echo.
    #[arg(long, value_enum, default_value_t = RankKeyArg::Mean)]
    pub rank_key: RankKeyArg,
    /// Worker threads for scoring (1 = sequential, 0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ScoreCmd {
    /// Everything but the backend descriptor, which is filled in once the backend is up.
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            lambda1: self.scoring.lambda1,
            lambda2: self.scoring.lambda2,
            phi: self.scoring.phi,
            patch_radius: self.scoring.radius,
            aggregation: self.scoring.aggregation.into(),
            thresholds: self.thresholds.thresholds(),
            rank_key: self.rank_key.into(),
            backend: Default::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateCmd {
    /// Scored JSONL file.
    pub scored: PathBuf,
    /// Human judgment to grade against: sem.value vs consistency, or nat.value vs naturalness.
    #[arg(long, value_enum, default_value_t = Target::Consistency)]
    pub target: Target,
    /// Human means at or above this count as high quality.
    #[arg(long, default_value_t = 3.0)]
    pub cutoff: f64,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectCmd {
    /// Scored JSONL file.
    pub scored: PathBuf,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankCmd {
    /// Scored JSONL file.
    pub scored: PathBuf,
    /// Sort key; mean is (semantic + naturalness) / 2.
    #[arg(long, value_enum, default_value_t = RankKeyArg::Mean)]
    pub rank_key: RankKeyArg,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeCmd {
    /// Scored JSONL file (a plain corpus file works with --source human).
    pub input: PathBuf,
    /// Use human annotations or automatic scores with thresholds.
    #[arg(long, value_enum, default_value_t = SourceArg::Human)]
    pub source: SourceArg,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
