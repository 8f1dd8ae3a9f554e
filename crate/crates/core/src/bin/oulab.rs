//! Batch runner: loads a TOML experiment config (or the built-in
//! reference one), applies command-line overrides and runs the requested
//! suites, writing one CSV per suite plus a summary and a timings file.
//!
//! Exit status: 0 when every row passes, 1 on a failed check or runtime
//! error, 2 on a configuration error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use oulab::config::{reference_config, ExperimentConfig};
use oulab::suites::{run_suites, write_reports, SUITE_NAMES};
use oulab::OulabError;

#[derive(Parser)]
#[command(name = "oulab", version, about = "Gaussian calculus laboratory batch runner")]
struct Cli {
    /// Experiment config (TOML); defaults to the built-in reference
    /// configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for the CSV reports, overriding the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Config override, e.g. --override run.samples=50000 (repeatable).
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every suite.
    Verify,
    /// Commutator representation, bounds and norm sweep.
    CommutatorSweep,
    /// Gaussian integral identities against Monte Carlo oracles.
    Identities,
    /// Characteristics solver and particle pushforward checks.
    Transport,
    /// Smoothed-range decomposition along the eps refinement path.
    RangeProbe,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();

    // Worker count is env-driven so reports stay flag-for-flag comparable.
    if let Ok(w) = std::env::var("OULAB_WORKERS") {
        match w.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: OULAB_WORKERS must be a positive integer, got {w:?}");
                return 2;
            }
        }
    }

    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::from_path(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        },
        None => reference_config(),
    };
    for ov in &cli.overrides {
        if let Err(e) = cfg.apply_override(ov) {
            eprintln!("error: {e}");
            return 2;
        }
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.out_dir = out.display().to_string();
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return 2;
    }

    let names: Vec<&str> = match cli.cmd {
        Cmd::Verify => SUITE_NAMES.to_vec(),
        Cmd::CommutatorSweep => vec!["commutator"],
        Cmd::Identities => vec!["identities"],
        Cmd::Transport => vec!["transport"],
        Cmd::RangeProbe => vec!["range"],
    };

    let report = match run_suites(&names, &cfg) {
        Ok(report) => report,
        Err(OulabError::Config(msg)) => {
            eprintln!("error: {msg}");
            return 2;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };

    let out_dir = PathBuf::from(&cfg.run.out_dir);
    if let Err(e) = write_reports(&report, &out_dir) {
        eprintln!("error: {e}");
        return 1;
    }

    for suite in &report.suites {
        let passed = suite.rows.iter().filter(|r| r.pass).count();
        println!(
            "{}: {}/{} checks passed ({:.0} ms)",
            suite.name,
            passed,
            suite.rows.len(),
            suite.wall_ms
        );
    }
    println!("reports written to {}", out_dir.display());
    if report.all_pass() {
        0
    } else {
        for f in report.failures() {
            eprintln!("FAILED: {f}");
        }
        1
    }
}
