//! `lrfhss`: batch front end for the hopping-sequence correlation study and
//! the LR-FHSS gateway simulations.

mod commands;
mod settings;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use settings::{parse_level, Defaults, RawOptions, Settings};

#[derive(Parser)]
#[command(name = "lrfhss", version, about = "LR-FHSS hopping-sequence families and gateway simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Family sizes and Hamming correlations, plus a sweep over sequence length.
    Correlate {
        #[command(flatten)]
        opts: Options,
        /// Also write every family as text under <out>/families/.
        #[arg(long)]
        export_families: bool,
    },
    /// Monte-Carlo gateway campaign and best-family summary.
    Simulate {
        #[command(flatten)]
        opts: Options,
    },
    /// Header-free collision model, rates relative to the driver family.
    CollisionRate {
        #[command(flatten)]
        opts: Options,
    },
    /// Best-family summary of an existing campaign CSV.
    Report {
        /// Campaign CSV written by `simulate`.
        input: PathBuf,
        /// Rank families by decoded `payload` or `packet` (payload plus header) data.
        #[arg(long, default_value = "payload")]
        level: String,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Options {
    /// File of key=value lines using the long flag names; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated family names (default: all eight).
    #[arg(long)]
    families: Option<String>,
    /// Coding rate: 1, 2 or both.
    #[arg(long)]
    cr: Option<String>,
    /// Comma-separated demodulator pool sizes; `unlimited` is accepted.
    #[arg(long)]
    demods: Option<String>,
    /// Node counts: a,b,c | start:stop:step | start:stop:lin[:points] | start:stop:log[:points].
    #[arg(long)]
    nodes: Option<String>,
    /// Repetitions per node count.
    #[arg(long)]
    reps: Option<String>,
    /// Master seed, decimal or 0x-hex.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    early_decode: bool,
    #[arg(long)]
    early_drop: bool,
    /// Early header drop.
    #[arg(long)]
    header_drop: bool,
    /// Collided slots a header replica may suffer and still be received.
    #[arg(long)]
    header_tolerance: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Longest sequence in the correlation length sweep.
    #[arg(long)]
    max_length: Option<String>,
    /// Rank families by decoded `payload` or `packet` data.
    #[arg(long)]
    level: Option<String>,
}

impl Options {
    fn resolve(self, defaults: &Defaults) -> Result<Settings> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RawOptions::parse_config(&text, path)?
            }
            None => RawOptions::default(),
        };
        let mut flags = RawOptions::default();
        let values = [
            ("families", self.families),
            ("cr", self.cr),
            ("demods", self.demods),
            ("nodes", self.nodes),
            ("reps", self.reps),
            ("seed", self.seed),
            ("header-tolerance", self.header_tolerance),
            ("out", self.out.map(|p| p.display().to_string())),
            ("max-length", self.max_length),
            ("level", self.level),
        ];
        for (key, value) in values {
            if let Some(v) = value {
                flags.set(key, v);
            }
        }
        for (key, on) in
            [("early-decode", self.early_decode), ("early-drop", self.early_drop), ("header-drop", self.header_drop)]
        {
            if on {
                flags.set(key, "1");
            }
        }
        Settings::resolve(&file.overlay(flags), defaults)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Correlate { opts, export_families } => {
            let s = opts.resolve(&Defaults { nodes: "100", demods: "100" })?;
            commands::correlate(&s, export_families)
        }
        Command::Simulate { opts } => {
            let s = opts.resolve(&Defaults { nodes: "100:6000:100", demods: "100,1000" })?;
            commands::simulate(&s)
        }
        Command::CollisionRate { opts } => {
            let s = opts.resolve(&Defaults { nodes: "10:10000:log", demods: "100" })?;
            commands::collision_rate(&s)
        }
        Command::Report { input, level, out } => commands::report(&input, parse_level(&level)?, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
