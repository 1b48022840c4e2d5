// `!(x > a)` is the NaN-rejecting form throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{write_json, Sink};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] drude_te::Error),
    #[error("i/o failure: {0}")]
    Io(String),
}

#[derive(Debug, Parser)]
#[command(name = "drude-te", version, about = "TE-mode experiments for Drude media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Zone map over a (k, omega) raster.
    Zones,
    /// Dispersion branches and critical points.
    Trace,
    /// Analytic mode profile.
    Mode,
    /// Eigenvalues of the discrete operator.
    Spectrum,
    /// Time-harmonic forcing from rest.
    Forced,
    /// Wave-packet decay fit.
    Decay,
    /// Limiting-amplitude convergence.
    Amplitude,
    /// Forcing at the plasmonic frequency.
    Resonance,
    /// Shape scenario of the lowest slab branch.
    Classify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Zones => "zones",
            Self::Trace => "trace",
            Self::Mode => "mode",
            Self::Spectrum => "spectrum",
            Self::Forced => "forced",
            Self::Decay => "decay",
            Self::Amplitude => "amplitude",
            Self::Resonance => "resonance",
            Self::Classify => "classify",
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_USAGE: u8 = 64;

fn run(command: Command, cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let mut sink = Sink::new(&cfg.output_dir);
    // a diagnostics file from an earlier failure would contradict this run
    let _ = std::fs::remove_file(cfg.output_dir.join("diagnostics.json"));
    let fields = match command {
        Command::Zones => commands::zones(cfg, &mut sink)?,
        Command::Trace => commands::trace(cfg, &mut sink)?,
        Command::Mode => commands::mode(cfg, &mut sink)?,
        Command::Spectrum => commands::spectrum(cfg, &mut sink)?,
        Command::Forced => commands::forced(cfg, &mut sink)?,
        Command::Decay => commands::decay(cfg, &mut sink)?,
        Command::Amplitude => commands::amplitude(cfg, &mut sink)?,
        Command::Resonance => commands::resonance(cfg, &mut sink)?,
        Command::Classify => commands::classify(cfg, &mut sink)?,
    };
    let summary = sink.summary(command.name(), fields);
    write_json(&sink.dir().join("summary.json"), &summary)?;
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let Some(config_path) = cli.config.as_deref() else {
        eprintln!("error: --config PATH is required\n\nUsage: drude-te <COMMAND> --config <PATH> [--out <DIR>] [--workers <INT>]");
        return ExitCode::from(EXIT_USAGE);
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let cfg = match RunConfig::load(config_path, cli.out.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(cli.command, &cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            let path = cfg.output_dir.join("diagnostics.json");
            let kind = match &e {
                CliError::Numerical(_) => "numerical",
                _ => "io",
            };
            let diag = json!({
                "command": cli.command.name(),
                "status": "failed",
                "kind": kind,
                "error": e.to_string(),
                "detail": format!("{e:?}"),
                "config": config_path.display().to_string(),
            });
            if let Err(w) = write_json(&path, &diag) {
                eprintln!("{w}");
            }
            eprintln!("{e} (diagnostics in {})", path.display());
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
