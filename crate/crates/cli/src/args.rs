use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "echoloop", version, about = "Echo-chamber analysis and counterfactual recommendation experiments")]
pub struct Cli {
    /// Directory holding every artifact the subcommands read and write.
    #[arg(long, global = true, env = "ECHOLOOP_ARTIFACT_DIR", default_value = "artifacts")]
    pub artifact_dir: PathBuf,

    /// Worker threads for data-parallel stages.
    #[arg(long, global = true, env = "ECHOLOOP_THREADS")]
    pub threads: Option<usize>,

    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    /// JSON experiment configuration; defaults apply to omitted fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a rating file (or generate the synthetic dataset) into ratings.tsv.
    Ingest(IngestArgs),
    /// Binarize ratings and split them into three chronological phases.
    Split(SplitArgs),
    /// Train one checkpoint per phase from the split artifacts.
    Train(Overrides),
    /// Run the base, MMR and counterfactual arms end to end.
    Experiment(ExperimentArgs),
    /// Analyse a group-sequence Markov chain.
    Markov(MarkovArgs),
    /// Run the exit-mechanism satisfaction simulation.
    Satisfy(Overrides),
    /// Print a ranked list for one user from a trained checkpoint.
    Recommend(RecommendArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Delimited rating file.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    pub input: Option<PathBuf>,
    /// Column preset: movielens (`u::i::r::t`) or tsv.
    #[arg(long, default_value = "movielens")]
    pub schema: String,
    /// Override the preset's delimiter.
    #[arg(long)]
    pub delimiter: Option<String>,
    /// Largest tolerated share of malformed lines.
    #[arg(long)]
    pub max_malformed: Option<f64>,
    /// Generate the synthetic dataset from the configuration instead.
    #[arg(long)]
    pub synth: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// First phase boundary (YYYY-MM-DD or epoch seconds).
    #[arg(long, requires = "b2")]
    pub b1: Option<String>,
    /// Second phase boundary.
    #[arg(long, requires = "b1")]
    pub b2: Option<String>,
    /// Offset of the boundary dates from UTC, in minutes.
    #[arg(long, allow_hyphen_values = true)]
    pub utc_offset_minutes: Option<i32>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Overrides {
    /// Seed for data generation, training, evaluation and simulation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of counterfactual histories.
    #[arg(long = "ctf-n")]
    pub ctf_n: Option<usize>,
    /// Probability of the factual history.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Recommendation list length.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Comma-separated arms out of base, mmr, dccf.
    #[arg(long)]
    pub arms: Option<String>,
    /// Also sweep alpha over 0.1..0.9 at the configured n.
    #[arg(long)]
    pub sweep_alpha: bool,
    /// Skip the satisfaction simulation.
    #[arg(long)]
    pub no_satisfaction: bool,
}

#[derive(Debug, Args)]
pub struct MarkovArgs {
    /// JSON chain spec; otherwise the configuration's markov block.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// type1, type2 or type3.
    #[arg(long = "type")]
    pub behavior: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Use Monte-Carlo only, for state spaces too large for exact analysis.
    #[arg(long)]
    pub simulate: bool,
    /// Start state as comma-separated group ids, e.g. `0,1`.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    pub trajectories: usize,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long)]
    pub user: u32,
    #[arg(long, default_value_t = 3)]
    pub phase: usize,
    /// base, mmr or dccf.
    #[arg(long, default_value = "dccf")]
    pub arm: String,
}
