//! The `brt` experiment runner: one subcommand per pipeline stage, all artifacts written under
//! the configured run directory and indexed in its manifest.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

pub use commands::{load_dataset, Baseline, FixtureArgs, Game, DATASET_FILE, GENERATOR_DIR, NFSP_DIR};
pub use config::{Backend, DataConfig, EvalConfig, ExperimentConfig, GeneratorConfig, SelectionConfig, DATA_ROOT_ENV};
pub use manifest::{hash_tree, sha256_file, RunManifest, StageRecord, RUN_MANIFEST};

use crate::dataio::Split;
use crate::error::Error;
use crate::nfsp::PolicyMode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "brt", version, about = "Macro-conditioned market simulation and robust trading agents")]
pub struct Cli {
    /// Print a machine-readable JSON summary instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct ConfigArg {
    /// Experiment configuration (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Average,
    BestResponse,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse CSVs, build features, impute, select macro indicators, write the dataset.
    Ingest(ConfigArg),
    /// Pretrain and adversarially train the market generator.
    TrainGenerator {
        #[command(flatten)]
        c: ConfigArg,
        /// Comma list of ae, forecast, gan (overrides the config).
        #[arg(long)]
        phases: Option<String>,
        /// Continue from a generator checkpoint; completed phases are skipped.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score generated windows against the real data.
    EvalGenerator {
        #[command(flatten)]
        c: ConfigArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Number of independent synthetic draws averaged.
        #[arg(long)]
        n_draws: Option<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Write a synthetic panel for one split as CSV.
    Sample {
        #[command(flatten)]
        c: ConfigArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Self-play training of the trader against the macro adversary.
    TrainNfsp {
        #[command(flatten)]
        c: ConfigArg,
        #[arg(long, value_enum)]
        backend: Option<Backend>,
        /// Override the configured number of steps.
        #[arg(long)]
        steps: Option<u64>,
        /// Game played by the matrix-game backend.
        #[arg(long, value_enum, default_value = "pennies")]
        game: Game,
    },
    /// Greedy evaluation on historical data, optionally against baselines.
    Backtest {
        #[command(flatten)]
        c: ConfigArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Comma list of baselines to add (buyhold, dqn).
        #[arg(long, value_enum, value_delimiter = ',')]
        compare: Vec<Baseline>,
        /// Evaluate on every instrument and test per-instrument differences.
        #[arg(long)]
        all_instruments: bool,
        #[arg(long, value_enum, default_value = "average")]
        mode: ModeArg,
    },
    /// One-dimensional t-SNE of feature windows and targets, labelled by split.
    TsneDiagnostic(ConfigArg),
    /// Collect stage outputs into report.json and report.md.
    Report(ConfigArg),
    /// Write fixture CSVs from the macro-driven synthetic market plus a starter config.
    MakeFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1200)]
        days: usize,
        #[arg(long, default_value_t = 2)]
        instruments: usize,
        #[arg(long = "macro", default_value_t = 2)]
        n_macro: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probability that a bar is dropped.
        #[arg(long, default_value_t = 0.0)]
        missing: f64,
    },
}

pub fn run(cli: &Cli) -> crate::Result<Value> {
    let cfg = |c: &ConfigArg| ExperimentConfig::load(&c.config);
    match &cli.command {
        Command::Ingest(c) => commands::cmd_ingest(&cfg(c)?),
        Command::TrainGenerator { c, phases, resume } => commands::cmd_train_generator(&cfg(c)?, phases.as_deref(), resume.as_deref()),
        Command::EvalGenerator { c, checkpoint, n_draws, split } => {
            commands::cmd_eval_generator(&cfg(c)?, checkpoint.as_deref(), *n_draws, (*split).into())
        }
        Command::Sample { c, checkpoint, split } => commands::cmd_sample(&cfg(c)?, checkpoint.as_deref(), (*split).into()),
        Command::TrainNfsp { c, backend, steps, game } => commands::cmd_train_nfsp(&cfg(c)?, *backend, *steps, *game),
        Command::Backtest { c, checkpoint, split, compare, all_instruments, mode } => {
            let mode = match mode {
                ModeArg::Average => PolicyMode::Average,
                ModeArg::BestResponse => PolicyMode::BestResponse,
            };
            commands::cmd_backtest(&cfg(c)?, checkpoint.as_deref(), (*split).into(), compare, *all_instruments, mode)
        }
        Command::TsneDiagnostic(c) => commands::cmd_tsne(&cfg(c)?),
        Command::Report(c) => commands::cmd_report(&cfg(c)?),
        Command::MakeFixture { out, days, instruments, n_macro, seed, missing } => commands::cmd_make_fixture(&FixtureArgs {
            out: out.clone(),
            days: *days,
            instruments: *instruments,
            n_macro: *n_macro,
            seed: *seed,
            missing: *missing,
        }),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_user_error() {
        EXIT_USER
    } else {
        EXIT_RUNTIME
    }
}

fn print_text(v: &Value) {
    if let Value::Object(m) = v {
        for (k, x) in m {
            match x {
                Value::String(s) => println!("{k}: {s}"),
                other => println!("{k}: {other}"),
            }
        }
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(v) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&v).expect("summary serialises"));
            } else {
                print_text(&v);
            }
            EXIT_OK
        }
        Err(e) => {
            let code = exit_code(&e);
            if cli.json {
                println!("{}", serde_json::json!({ "error": e.to_string(), "exit_code": code }));
            }
            eprintln!("error: {e}");
            code
        }
    }
}
