//! Command-line front end: argument parsing, config loading and dispatch.

pub mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use housebench::error::ErrorKind;
use housebench::{Error, Result};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "housebench", version, about = "Benchmark housing price models on repeated random splits")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true, default_value = "housebench.toml")]
    pub config: PathBuf,
    /// Override the base seed (and the generator seed for `synthesize`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Skip SVG output.
    #[arg(long, global = true)]
    pub no_plots: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset, its schema and its ground truth.
    Synthesize,
    /// Descriptive statistics of the raw data.
    Describe,
    /// Fit preprocessing on the first split and write design matrices.
    Prepare,
    /// Tune and compare all configured models over repeated splits.
    Compare,
    /// Permutation importance from a tuned random forest.
    Importance,
    /// Partial dependence curves from a tuned random forest.
    Pdp,
    /// Re-render tables from an existing report.json.
    Report,
}

impl Cli {
    pub fn load_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.plan.base_seed = s;
            if let (Command::Synthesize, Some(g)) = (self.command, cfg.synth.as_mut()) {
                g.seed = s;
            }
        }
        if let Some(o) = &self.out {
            // Command-line paths are relative to the working directory, not the config.
            cfg.out_dir = std::path::absolute(o).unwrap_or_else(|_| o.clone());
        }
        if self.no_plots {
            cfg.plots = false;
        }
        Ok(cfg)
    }
}

pub fn execute(cli: &Cli) -> Result<commands::Output> {
    let cfg = cli.load_config()?;
    match cli.command {
        Command::Synthesize => commands::synthesize(&cfg),
        Command::Describe => commands::describe_cmd(&cfg),
        Command::Prepare => commands::prepare(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Importance => commands::importance(&cfg),
        Command::Pdp => commands::pdp(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Model => 3,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.stdout.as_bytes());
            let base = std::env::current_dir().unwrap_or_default();
            for f in &out.files {
                log::info!("wrote {}", commands::relative_to(f, &base));
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
