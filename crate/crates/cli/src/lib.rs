//! Scenario runner for the replicator-mutator solver suite.

pub mod commands;
pub mod config;
pub mod engines;
pub mod error;
pub mod manifest;
pub mod output;
pub mod svg;
pub mod validate;

use clap::{Args, Parser, Subcommand};
use config::ScenarioConfig;
use error::CliError;
use output::{csv, num, write_atomic};
use repmut_core::tolerances::Tolerances;
use std::path::PathBuf;

/// Seed of the invariant suite when none is given.
pub const VALIDATE_SEED: u64 = 20_240_917;

#[derive(Debug, Parser)]
#[command(name = "repmut", version, about = "Replicator-mutator scenario runner")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Scenario configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory of the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Densities of every configured engine plus a pairwise L1 table.
    Solve,
    /// Propagation-of-chaos rate study with CSV, SVG and fitted slope.
    Chaos,
    /// Weighted particle run with mass estimates.
    Particles,
    /// Invariant suite; prints a pass/fail matrix.
    Validate {
        /// Multiplies every tolerance (0 forces failures).
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
    /// Writes the reproducibility manifest without running anything.
    Manifest,
}

fn load(global: &GlobalArgs) -> Result<ScenarioConfig, CliError> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn validate(global: &GlobalArgs, scale: f64) -> Result<Vec<String>, CliError> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(CliError::Config(format!("tolerance scale {scale} must be finite and nonnegative")));
    }
    let tol = Tolerances::default().scaled(scale);
    let checks = validate::run_suite(&tol, global.seed.unwrap_or(VALIDATE_SEED));
    let mut lines: Vec<String> = checks.iter().map(|c| c.row()).collect();
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.id).collect();
    if let Some(dir) = &global.out {
        let rows = checks.iter().map(|c| {
            let status = if c.passed() { "pass" } else { "fail" };
            format!("{},{status},{},{},{}", c.id, num(c.value), num(c.limit.0), num(c.limit.1))
        });
        write_atomic(&dir.join("validate.csv"), csv("id,status,value,limit_lo,limit_hi", rows).as_bytes())?;
    }
    if failed.is_empty() {
        lines.push(format!("all {} invariants passed", checks.len()));
        Ok(lines)
    } else {
        for l in &lines {
            println!("{l}");
        }
        Err(CliError::Invariant(format!("{} of {} invariants failed: {}", failed.len(), checks.len(), failed.join(", "))))
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(k) = cli.global.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("warning: thread pool already initialised: {e}");
        }
    }
    let result = match cli.command {
        Command::Validate { tolerance_scale } => validate(&cli.global, tolerance_scale),
        Command::Solve => load(&cli.global).and_then(commands::solve).map(|o| o.lines),
        Command::Chaos => load(&cli.global).and_then(commands::chaos).map(|o| o.lines),
        Command::Particles => load(&cli.global).and_then(commands::particles).map(|o| o.lines),
        Command::Manifest => load(&cli.global).and_then(commands::manifest).map(|o| o.lines),
    };
    match result {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
