//! `regbench`: generate benchmarks, run baselines and models, score, report.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regbench::baselines::TieRule;
use regbench::evaluation::DEFAULT_RESAMPLES;
use regbench::prompts::PromptFormat;
use regbench::taskgen::TaskKind;

#[derive(Parser, Debug)]
#[command(name = "regbench", version, about = "Regular-language in-context learning benchmark")]
struct Cli {
    /// Cap on worker threads for generation, baselines, and model requests.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample DFAs and task instances into a new run directory.
    Gen(GenArgs),
    /// Run baseline predictors on a run.
    Baseline(BaselineArgs),
    /// Print the prompt for one instance.
    Render(RenderArgs),
    /// Query a model endpoint for every instance of a run.
    RunModel(RunModelArgs),
    /// Score all predictions in a run.
    Score(RunArg),
    /// Aggregate scores into a ranked results table.
    Report(ReportArgs),
    /// Paired bootstrap test between two predictors.
    Significance(SignificanceArgs),
    /// Classify DFAs by the weakest baseline that solves them.
    Difficulty(DifficultyArgs),
    /// Sample regex-control items, optionally scoring a model on them.
    RegexControl(RegexControlArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_parser = parse_task)]
    task: TaskKind,
    #[arg(long, default_value_t = 1000)]
    dfas: usize,
    #[arg(long, default_value_t = 30)]
    instances: usize,
    /// Examples per instance; for transducer runs, the sequence length.
    #[arg(long, default_value_t = 30)]
    examples: usize,
    /// Transducer sequence length; overrides --examples.
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArg {
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    run: PathBuf,
    /// Comma-separated predictor names; the task suffix is optional.
    /// Defaults to the full baseline suite for the run's task.
    #[arg(long, value_delimiter = ',')]
    predictor: Vec<String>,
    /// Spread the work across DFAs on all worker threads.
    #[arg(long)]
    parallel: bool,
    #[arg(long, value_enum, default_value = "rightmost-occurrence")]
    tie_rule: TieRuleArg,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum TieRuleArg {
    RightmostOccurrence,
    LastRevealed,
}

impl From<TieRuleArg> for TieRule {
    fn from(t: TieRuleArg) -> Self {
        match t {
            TieRuleArg::RightmostOccurrence => TieRule::RightmostOccurrence,
            TieRuleArg::LastRevealed => TieRule::LastRevealed,
        }
    }
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_parser = parse_format)]
    format: PromptFormat,
    #[arg(long, default_value_t = 0)]
    dfa: u64,
    #[arg(long, default_value_t = 0)]
    instance: usize,
}

#[derive(Args, Debug)]
struct RunModelArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_parser = parse_format)]
    format: PromptFormat,
    /// JSON endpoint config.
    #[arg(long)]
    endpoint: PathBuf,
    /// Predictor id prefix; defaults to the endpoint's model name.
    #[arg(long)]
    name: Option<String>,
    /// Response cache directory; defaults to `<run>/cache`.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    /// Keep every prompt format as its own row instead of the better of
    /// basic and basic-cot per model.
    #[arg(long)]
    all_formats: bool,
}

#[derive(Args, Debug)]
struct SignificanceArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
}

#[derive(Args, Debug)]
struct DifficultyArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
}

#[derive(Args, Debug)]
struct RegexControlArgs {
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Query this endpoint and report YES/NO accuracy.
    #[arg(long)]
    endpoint: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Write items (and responses) as JSONL here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<PromptFormat, String> {
    s.parse().map_err(|e: regbench::PromptError| e.to_string())
}

/// Errors in what the user asked for, as opposed to failures while doing it.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Render(a) => commands::render(a),
        Command::RunModel(a) => commands::run_model(a, cli.jobs),
        Command::Score(a) => commands::score(a),
        Command::Report(a) => commands::report(a),
        Command::Significance(a) => commands::significance(a),
        Command::Difficulty(a) => commands::difficulty(a),
        Command::RegexControl(a) => commands::regex_control(a, cli.jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
