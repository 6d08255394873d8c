//! The `tsr` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;
use tsr_core::AaMode;

use crate::config::{OutputFormat, Source};
use crate::error::{CliError, CliResult, ErrorKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "tsr", version, about = "Flicker-coded temporal super-resolution experiments")]
pub struct Cli {
    /// Campaign config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Base seed for every random draw; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "tsr-out")]
    pub out: PathBuf,

    /// Built-in config: fig3..fig9, fig13, fig14, table1.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,

    /// Output files: csv, or csv+svg for preview plots as well.
    #[arg(long, global = true, value_parser = ["csv", "csv+svg"])]
    pub format: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate channel frames for the configured scene and pattern.
    Simulate,
    /// Recover sub-exposure traces, end to end or from recorded frames.
    Reconstruct {
        /// Frames CSV (frame_index,C_1..C_M) to reconstruct instead of simulating.
        #[arg(long, value_name = "PATH")]
        frames: Option<PathBuf>,
        /// Patch CSV (frame_index,pixel,C_1..C_M) for the joint five-pixel solve.
        #[arg(long, value_name = "PATH", conflicts_with = "frames")]
        spatial: Option<PathBuf>,
    },
    /// Scan windows at several N and stitch their spectra.
    Scan {
        #[arg(long, value_parser = ["composition", "literal"])]
        aa_mode: Option<String>,
    },
    /// Evaluate flicker patterns over a random-tone ensemble.
    Patterns,
    /// Sweep the flicker-to-environment ratio and measure SNR.
    Snr,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Scan { .. } => "scan",
            Command::Patterns => "patterns",
            Command::Snr => "snr",
        }
    }
}

fn load_source(cli: &Cli) -> CliResult<Source> {
    match (&cli.config, &cli.preset) {
        (Some(_), Some(_)) => Err(CliError::usage("--config and --preset are mutually exclusive")),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Ok(Source {
                name: path.display().to_string(),
                text,
            })
        }
        (None, Some(name)) => {
            let (name, text) = presets::lookup(name).ok_or_else(|| {
                CliError::usage(format!("unknown preset {name}; known: {}", presets::names().join(",")))
            })?;
            Ok(Source {
                name: format!("preset:{name}"),
                text: text.to_string(),
            })
        }
        (None, None) => Ok(Source {
            name: "<defaults>".to_string(),
            text: String::new(),
        }),
    }
}

/// Runs a parsed command line. Nothing is written unless every step,
/// including validation and computation, has succeeded.
pub fn run(cli: &Cli) -> CliResult<()> {
    let source = load_source(cli)?;
    let mut cfg = config::parse(&source)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(f) = &cli.format {
        cfg.output.format = OutputFormat::parse(f).ok_or_else(|| CliError::usage(format!("unknown format {f}")))?;
    }
    if let Command::Scan { aa_mode: Some(mode) } = &cli.command {
        cfg.scan.aa_mode = match mode.as_str() {
            "literal" => AaMode::Literal,
            _ => AaMode::Composition,
        };
    }
    cfg.validate(&source)?;

    let mut result = match &cli.command {
        Command::Simulate => commands::simulate(&cfg)?,
        Command::Reconstruct { frames, spatial } => commands::reconstruct(&cfg, frames.as_deref(), spatial.as_deref())?,
        Command::Scan { .. } => commands::scan(&cfg)?,
        Command::Patterns => commands::patterns(&cfg)?,
        Command::Snr => commands::snr(&cfg)?,
    };

    let mut files = result.outputs.names();
    files.push("manifest.json".to_string());
    let manifest = json!({
        "tool": "tsr",
        "version": VERSION,
        "command": cli.command.name(),
        "seed": cfg.seed,
        "source": source.name,
        "files": files,
        "results": result.notes,
        "config": serde_json::to_value(&cfg).map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?,
    });
    let mut body = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
    body.push('\n');
    result.outputs.text("manifest.json", body);
    result.outputs.commit(&cli.out)
}

/// Parses `args` and runs; returns the exit code. Help and version requests
/// print as usual, every other failure prints one `error ...` line.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            let first = match e.kind() {
                K::DisplayHelp | K::DisplayVersion => {
                    let _ = e.print();
                    return 0;
                }
                K::DisplayHelpOnMissingArgumentOrSubcommand | K::MissingSubcommand => {
                    "missing command; see tsr --help".to_string()
                }
                _ => e
                    .to_string()
                    .lines()
                    .next()
                    .unwrap_or("")
                    .trim_start_matches("error: ")
                    .to_string(),
            };
            let err = CliError::usage(first);
            eprintln!("{err}");
            return err.kind.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.kind.exit_code()
        }
    }
}
