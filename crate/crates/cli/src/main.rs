//! `regime-hmm`: ingest → features → train/select → predict → backtest → report.
//!
//! Exit codes: 0 success, 1 pipeline failure, 2 invalid manifest or flags.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use regime_hmm::backtest::StrategyMode;
use regime_hmm::data_io::{DEFAULT_ROLLING_WINDOW, PRESETS};
use regime_hmm::model_selection::Criterion;

use manifest::{resolve, Overrides};

#[derive(Parser)]
#[command(name = "regime-hmm", version, about = "HMM regime detection, expected-Sharpe prediction and backtesting")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run manifest; flags override its fields.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Input CSV (`date,return` or `date,close`); repeatable.
    #[arg(long = "instrument", global = true)]
    instruments: Vec<PathBuf>,
    /// EWMM spans, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    span: Vec<usize>,
    #[arg(long, global = true)]
    states: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true)]
    cost_bps: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    horizon: Option<i64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: $REGIME_HMM_OUT, else ./regime-hmm-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    LongOnly,
    LongShort,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Validate inputs, normalize them to `date,return` and write rolling moments.
    Ingest {
        #[arg(long, default_value_t = DEFAULT_ROLLING_WINDOW)]
        window: usize,
    },
    /// Fit one model per (instrument, span).
    Train,
    /// Information-criterion sweep over state counts.
    Select {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        candidates: Vec<usize>,
        #[arg(long, default_value = "bic")]
        criterion: Criterion,
    },
    /// Per-day state probabilities, PESR and regime on the test window.
    Predict,
    /// Long-only / long-short backtests of trained models.
    Backtest,
    /// Markdown summary of models, backtests and synthetic detection accuracy.
    Report,
    /// Generate a synthetic series with its hidden path.
    Synth {
        #[arg(long, default_value = "planted", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        preset: String,
        #[arg(long, default_value_t = 5000)]
        length: usize,
    },
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        instruments: c.instruments.clone(),
        spans: c.span.clone(),
        states: c.states,
        modes: c.mode.map(|m| match m {
            ModeArg::LongOnly => vec![StrategyMode::LongOnly],
            ModeArg::LongShort => vec![StrategyMode::LongShort],
            ModeArg::Both => vec![StrategyMode::LongOnly, StrategyMode::LongShort],
        }),
        cost_bps: c.cost_bps,
        horizon: c.horizon,
        seed: c.seed,
        out: c.out.clone(),
        sequential: c.sequential,
    }
}

fn run(cli: Cli) -> ExitCode {
    let needs_instruments = !matches!(cli.command, Command::Synth { .. });
    let settings = match resolve(cli.common.manifest.as_deref(), overrides(&cli.common), needs_instruments) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("invalid manifest: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Ingest { window } => commands::ingest(&settings, window),
        Command::Train => commands::train(&settings),
        Command::Select { candidates, criterion } => {
            if candidates.is_empty() || candidates.contains(&0) {
                eprintln!("invalid manifest: candidates must be positive state counts");
                return ExitCode::from(2);
            }
            commands::select(&settings, &candidates, criterion)
        }
        Command::Predict => commands::predict(&settings),
        Command::Backtest => commands::backtest(&settings),
        Command::Report => commands::report(&settings),
        Command::Synth { preset, length } => commands::synth(&settings.out, &preset, length, settings.train.seed)
            .map(|path| {
                println!("{}", path.display());
                commands::Failures::default()
            }),
    };
    match result {
        Ok(f) if f.0.is_empty() => ExitCode::SUCCESS,
        Ok(f) => {
            eprintln!("{} item(s) failed", f.0.len());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    run(Cli::parse())
}
