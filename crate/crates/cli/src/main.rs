// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use decay_ledger::sim::OptimizerKind;
use decay_ledger::Error;

/// Weight-decay forgetting analysis and contamination-experiment tooling.
///
/// Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numeric or
/// divergence error. Output files are written only when the command succeeds.
#[derive(Parser)]
#[command(name = "decay-ledger", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forgetting curves, forgetting times and final-weight composition of a run.
    Analyze(AnalyzeArgs),
    /// Runs an instrumented optimizer on a synthetic problem and checks the
    /// weight decomposition against the final weights.
    Simulate(SimulateArgs),
    /// Bigram language-model demo: contaminate a training window, then watch
    /// the accuracy gap fade.
    ForgetDemo(ForgetArgs),
    /// Removes near-duplicate benchmark questions.
    Dedup(DedupArgs),
    /// Builds a contamination plan and injects it into a token stream.
    Contaminate(ContaminateArgs),
    /// Accuracy gaps against the holdout with bootstrap intervals.
    GapStats(GapArgs),
}

#[derive(Args, Clone, Copy)]
pub struct SeedArg {
    /// RNG seed. Falls back to DECAY_LEDGER_SEED, then to a random seed that
    /// is printed.
    #[arg(long, env = "DECAY_LEDGER_SEED")]
    pub seed: Option<u64>,
}

impl SeedArg {
    pub fn resolve(self) -> u64 {
        self.seed.unwrap_or_else(|| {
            let s = rand::random::<u64>();
            println!("seed: {s} (generated; pass --seed {s} to repeat)");
            s
        })
    }
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Run config (TOML file) or a preset name: olmo-1b, olmo-7b,
    /// llama3-405b-like, gpt3-124m-like.
    pub config: String,
    /// Forgetting threshold for the bound and the exact time.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Step whose update is followed (0 = initial weights).
    #[arg(long, default_value_t = 0)]
    pub origin: u64,
    /// Also report a curve per decile origin (on by default).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub deciles: bool,
    /// Curve sampling stride in steps; default keeps about 500 points.
    #[arg(long)]
    pub stride: Option<u64>,
    /// Writes PREFIX.curves.csv and PREFIX.composition.csv.
    #[arg(long, value_name = "PREFIX")]
    pub csv: Option<PathBuf>,
    /// Writes PREFIX.curves.svg and PREFIX.composition.svg.
    #[arg(long, value_name = "PREFIX")]
    pub svg: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ProblemKind {
    /// Random positive-definite quadratic with cycling example centers.
    Quadratic,
    /// Constant loss: only weight decay moves the weights.
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ScheduleChoice {
    Constant,
    Cosine,
    Linear,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "quadratic")]
    pub problem: ProblemKind,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Distinct examples of the quadratic problem.
    #[arg(long, default_value_t = 16)]
    pub examples: usize,
    /// Smallest curvature added to the quadratic.
    #[arg(long, default_value_t = 0.1)]
    pub min_eig: f64,
    /// adamw, sgd-wd or sgd-momentum-wd.
    #[arg(long, default_value = "adamw")]
    pub optimizer: OptimizerKind,
    /// Run config file or preset; replaces --steps/--lr/--wd/--schedule/--warmup.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    /// Peak learning rate.
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// Weight decay coefficient.
    #[arg(long, default_value_t = 0.1)]
    pub wd: f64,
    #[arg(long, value_enum, default_value = "cosine")]
    pub schedule: ScheduleChoice,
    #[arg(long, default_value_t = 0)]
    pub warmup: u64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_epsilon: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Per-step CSV trace (step, lr, example, loss, update norm).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Binary per-step update vectors.
    #[arg(long)]
    pub updates: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
pub enum DemoMode {
    /// Fresh data after the contamination window.
    Fresh,
    /// A short block repeated after the window.
    Repeated,
    /// No contamination at all.
    Null,
}

#[derive(Args)]
pub struct ForgetArgs {
    #[arg(long, value_enum, default_value = "fresh")]
    pub mode: DemoMode,
    /// Weight decay; a comma-separated list runs a sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub wd: Vec<f64>,
    #[arg(long, default_value_t = decay_ledger::sim::TOY_STEPS)]
    pub steps: u64,
    #[arg(long, default_value_t = decay_ledger::sim::TOY_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub vocab: usize,
    /// Tokens in the block cycled after the window in repeated mode.
    #[arg(long, default_value_t = decay_ledger::sim::TOY_REPEAT_BLOCK)]
    pub repeat_block: usize,
    /// Steps between evaluations; default 500, or steps/40 for short runs.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Gap curves as CSV (weight_decay, step, gap_ce, sigma).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Gap curves as an SVG line chart.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Args)]
pub struct DedupArgs {
    /// Question records, one JSON object per line.
    pub records: PathBuf,
    /// Normalized edit distance at or below which two questions are duplicates.
    #[arg(long, default_value_t = decay_ledger::dedup::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Surviving records as JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Args)]
pub struct ContaminateArgs {
    /// Question records, one JSON object per line.
    pub records: PathBuf,
    /// Clean token stream (TOKS binary). Without it a synthetic stream is generated.
    #[arg(long)]
    pub stream: Option<PathBuf>,
    /// Length of the synthetic clean stream.
    #[arg(long, default_value_t = 1_000_000)]
    pub synth_tokens: usize,
    /// Questions per contaminated subset.
    #[arg(long, value_delimiter = ',', required_unless_present = "plan")]
    pub subset_sizes: Vec<usize>,
    /// Repetitions per subset, matching --subset-sizes.
    #[arg(long, value_delimiter = ',', default_value = "4,12,36,144")]
    pub repetitions: Vec<u32>,
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    /// Restrict insertions to a fraction of the stream, e.g. 0.2,0.4.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub window: Option<Vec<f64>>,
    /// Use the reference benchmark mix instead of the records' own shares.
    #[arg(long)]
    pub reference_mix: bool,
    /// Reuse an existing plan instead of building one.
    #[arg(long, conflicts_with_all = ["subset_sizes", "holdout", "window", "reference_mix"])]
    pub plan: Option<PathBuf>,
    /// Contaminated stream; provenance goes to OUT.prov.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
    /// Per-question position profile CSV.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Args)]
pub struct GapArgs {
    /// CSV with header question_id,label,correct; the holdout label is "holdout".
    pub outcomes: PathBuf,
    #[arg(long, default_value_t = decay_ledger::stats::DEFAULT_LEVEL)]
    pub level: f64,
    #[arg(long, default_value_t = decay_ledger::stats::DEFAULT_RESAMPLES)]
    pub resamples: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Bar chart of the gaps.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        Error::Numeric { .. } | Error::Divergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::ForgetDemo(a) => commands::forget_demo(a),
        Command::Dedup(a) => commands::dedup(a),
        Command::Contaminate(a) => commands::contaminate(a),
        Command::GapStats(a) => commands::gap_stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
