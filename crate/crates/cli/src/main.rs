//! `ffbsde` command-line front-end.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ffbsde::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use ffbsde::Error as E;
        match self {
            CliError::Config(_) => 3,
            CliError::Core(e) => match e {
                E::NotConverged { .. } => 2,
                E::InvalidParameter { .. }
                | E::UnknownProblem(_)
                | E::MissingParameter { .. }
                | E::DimensionMismatch { .. }
                | E::RankDeficientG { .. }
                | E::SmoothnessRequired => 3,
                _ => 1,
            },
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ffbsde", version, about = "Solvers and checks for functional fully coupled FBSDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the FBSDE and write the solution, trace and manifest.
    Solve(Common),
    /// Estimate the assumption constants by sampling.
    Check {
        #[command(flatten)]
        common: Common,
        /// Exit with status 4 if any check reports a violation.
        #[arg(long)]
        strict: bool,
    },
    /// Evaluate the path-dependent PDE residual and the Feynman-Kac gap.
    Ppde(Common),
    /// Tabulate functional Ito formula residuals against the step count.
    ItoDemo(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, strict) = match &cli.command {
        Command::Solve(c) => ("solve", c, false),
        Command::Check { common, strict } => ("check", common, *strict),
        Command::Ppde(c) => ("ppde", c, false),
        Command::ItoDemo(c) => ("ito-demo", c, false),
    };
    match run(name, common, strict) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(name: &str, common: &Common, strict: bool) -> Result<u8, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let resolved = cfg.resolve()?;
    let output = common
        .output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --output or set output_dir".into()))?;
    let mut run = manifest::RunDir::create(output)?;
    let outcome = match name {
        "solve" => commands::solve(&cfg, &resolved, &mut run),
        "check" => commands::check(&cfg, &resolved, &mut run, strict),
        "ppde" => commands::ppde(&cfg, &resolved, &mut run),
        _ => commands::ito_demo(&cfg, &mut run),
    };
    let code = match &outcome {
        Ok(c) => *c,
        Err(e) => e.exit_code(),
    };
    let echo = toml::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    run.finish(name, echo, common.threads, i32::from(code))?;
    outcome
}
