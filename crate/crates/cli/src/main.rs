use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use loadcast_cli::commands::{self, DataPaths};
use loadcast_cli::config;
use loadcast_cli::ingest;

/// Varying-coefficient electricity load forecasting toolkit.
#[derive(Parser)]
#[command(name = "loadcast", version, about)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Loads CSV (date,interval,load).
    #[arg(long, global = true)]
    loads: Option<PathBuf>,
    /// Covariates CSV (date plus named numeric columns).
    #[arg(long, global = true)]
    covariates: Option<PathBuf>,
    /// Holidays file, one ISO date per line.
    #[arg(long, global = true)]
    holidays: Option<PathBuf>,
    /// Fitted-model file to write (fit) or read (other commands).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Target date (YYYY-MM-DD).
    #[arg(long, global = true)]
    date: Option<String>,
    /// Interval miscoverage level; overrides config.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Forecast mode: day-ahead or intraday; overrides config.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// RNG seed for simulation helpers (reserved; commands are
    /// deterministic).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-day-class models and write the model file.
    Fit,
    /// Day-ahead or intraday forecast for one date.
    Forecast,
    /// Forecast decomposed into past-load and per-covariate weather terms.
    Decompose,
    /// Post-selection forecast intervals for one date.
    Interval,
    /// Rank the tuning grid on the trailing selection window.
    Tune,
    /// Rolling-origin backtest with monthly tuning epochs.
    Backtest,
    /// Emit plot-ready CSV tables from a fitted model.
    EmitPlots,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config::load_config(cli.config.as_deref())?;
    let date = || -> Result<chrono::NaiveDate> {
        ingest::parse_date(cli.date.as_deref().context("missing required flag --date")?)
    };
    let loads = || commands::require_path(&cli.loads, "loads");
    let model = || commands::require_path(&cli.model, "model");
    let out = || commands::require_path(&cli.out, "out");
    fn data_paths<'a>(
        l: &'a PathBuf,
        covariates: &'a Option<PathBuf>,
        holidays: &'a Option<PathBuf>,
    ) -> DataPaths<'a> {
        DataPaths {
            loads: l.as_path(),
            covariates: covariates.as_deref(),
            holidays: holidays.as_deref(),
        }
    }

    match cli.command {
        Command::Fit => {
            let l = loads()?;
            commands::cmd_fit(&cfg, &data_paths(&l, &cli.covariates, &cli.holidays), &model()?)
        }
        Command::Forecast => {
            let l = loads()?;
            let mode = config::resolve_mode(cli.mode.as_deref(), &cfg)?;
            commands::cmd_forecast(&model()?, &data_paths(&l, &cli.covariates, &cli.holidays), date()?, mode, &out()?)
        }
        Command::Decompose => {
            let l = loads()?;
            let mode = config::resolve_mode(cli.mode.as_deref(), &cfg)?;
            commands::cmd_decompose(&model()?, &data_paths(&l, &cli.covariates, &cli.holidays), date()?, mode, &out()?)
        }
        Command::Interval => {
            let l = loads()?;
            let alpha = config::resolve_alpha(cli.alpha, &cfg);
            commands::cmd_interval(&model()?, &data_paths(&l, &cli.covariates, &cli.holidays), date()?, alpha, &out()?)
        }
        Command::Tune => {
            let l = loads()?;
            commands::cmd_tune(&cfg, &data_paths(&l, &cli.covariates, &cli.holidays), date()?, &out()?)
        }
        Command::Backtest => {
            let l = loads()?;
            commands::cmd_backtest(&cfg, &data_paths(&l, &cli.covariates, &cli.holidays), &out()?)
        }
        Command::EmitPlots => {
            let l = cli.loads.clone();
            let dp = l.as_ref().map(|p| DataPaths {
                loads: p.as_path(),
                covariates: cli.covariates.as_deref(),
                holidays: cli.holidays.as_deref(),
            });
            commands::cmd_emit_plots(&cfg, &model()?, dp.as_ref(), &out()?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
