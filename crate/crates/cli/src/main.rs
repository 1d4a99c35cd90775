//! `visor`: generate worlds and corpora, roll out and evaluate policies,
//! train the toy policy, inspect results.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
//! Log level comes from `VISOR_LOG` (`error`, `info` or `debug`).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "visor",
    version,
    about = "Waypoint-selection object navigation toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Generate one world and write it as JSON.
    GenWorld(GenWorldArgs),
    /// Roll out shortest-path demonstrations into a decision corpus.
    GenCorpus(GenCorpusArgs),
    /// Print per-split corpus statistics.
    Stats(StatsArgs),
    /// Run one episode, writing per-step images and a log.
    RunEpisode(RunEpisodeArgs),
    /// Evaluate a policy on a benchmark episode set.
    Evaluate(EvaluateArgs),
    /// Supervised warm-up of the toy policy.
    TrainSft(TrainSftArgs),
    /// Group sequence policy optimization of the toy policy.
    TrainGspo(TrainGspoArgs),
    /// Print the decision timeline of an episode log.
    Replay(ReplayArgs),
    /// Diff two evaluation reports.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct Common {
    /// Seed for all randomness.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Versioned JSON config; explicit flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Normal,
    OracleStop,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KlArg {
    Objective,
    Surrogate,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatioArg {
    Sequence,
    Token,
}

#[derive(Args, Debug)]
pub struct GenWorldArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    #[command(flatten)]
    pub common: Common,
    /// Episodes to roll out.
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Split name; splits draw disjoint worlds.
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Minimum start-to-goal distance (m).
    #[arg(long, default_value_t = 3.0)]
    pub min_start_distance: f64,
    /// Corpus directory; the split goes in a subdirectory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Corpus directory.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long, default_value_t = false)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct PolicyArgs {
    /// Built-in policy (oracle, random, heuristic) or external transport
    /// (`stdio:COMMAND ARGS`, `tcp:PORT`, `tcp:HOST:PORT`).
    #[arg(long, default_value = "heuristic")]
    pub policy: String,
    /// Stop rule.
    #[arg(long, value_enum, default_value_t = ModeArg::Normal)]
    pub mode: ModeArg,
    /// Seconds to wait for an external policy's answer.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
}

#[derive(Args, Debug)]
pub struct RunEpisodeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Benchmark file to take the episode from; sampled from --seed if absent.
    #[arg(long)]
    pub bench: Option<PathBuf>,
    /// Episode index within the benchmark.
    #[arg(long, default_value_t = 0)]
    pub episode: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Benchmark file; generated from --seed, --episodes and --split if absent.
    #[arg(long)]
    pub bench: Option<PathBuf>,
    /// Episodes in a generated benchmark.
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Split name of a generated benchmark.
    #[arg(long, default_value = "bench")]
    pub split: String,
    /// Minimum start-to-goal distance in a generated benchmark (m).
    #[arg(long, default_value_t = 3.0)]
    pub min_start_distance: f64,
    /// Worker threads (external policies always run on one).
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Corpus directory; synthetic decisions are used if absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Training split of the corpus.
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Held-out split of the corpus.
    #[arg(long)]
    pub eval_split: Option<String>,
    /// Synthetic training decisions when no corpus is given.
    #[arg(long, default_value_t = 4000)]
    pub synthetic_n: usize,
}

#[derive(Args, Debug)]
pub struct TrainSftArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Optimizer steps.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainGspoArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint stem to start from (and use as KL reference); uniform if absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Subsample to equal stop and non-stop decisions.
    #[arg(long, default_value_t = false)]
    pub balance: bool,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    /// KL penalty weight.
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.2)]
    pub clip_eps: f64,
    /// Responses sampled per prompt.
    #[arg(long, default_value_t = 12)]
    pub group_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub prompts_per_step: usize,
    /// Where the KL penalty enters.
    #[arg(long, value_enum, default_value_t = KlArg::Objective)]
    pub kl: KlArg,
    /// Sequence- or token-level importance ratios.
    #[arg(long, value_enum, default_value_t = RatioArg::Sequence)]
    pub ratio: RatioArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Episode log written by run-episode.
    #[arg(long)]
    pub log: PathBuf,
    /// Also write the timeline to <out>/timeline.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Baseline report JSON.
    pub a: PathBuf,
    /// Report JSON to compare against the baseline.
    pub b: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long, default_value_t = false)]
    pub json: bool,
}

fn init_logging() -> Result<(), CliError> {
    let level = std::env::var("VISOR_LOG").unwrap_or_else(|_| "info".into());
    if !matches!(level.as_str(), "error" | "info" | "debug") {
        return Err(CliError::config(format!(
            "VISOR_LOG must be error, info or debug, got {level:?}"
        )));
    }
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .try_init()
        .ok();
    Ok(())
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let sub = matches
        .subcommand()
        .map(|(_, m)| m)
        .expect("subcommand required");
    let result = init_logging().and_then(|_| commands::run(cli.cmd, config::Given(sub)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
