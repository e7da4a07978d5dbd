//! Command line runner for hedging experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use lrm_hedge::experiment::{
    oracle_suite, paths_to_csv, prepare, run_condition_check, run_experiment, ExperimentConfig,
    OUTPUT_DIR_ENV,
};

#[derive(Parser)]
#[command(
    name = "lrmhedge",
    about = "Locally risk-minimizing hedging under liquidity costs",
    long_about = "Simulates a jump-driven electricity spot model, prices delivery-period \
                  futures on the paths, and computes hedge strategies that trade off \
                  replication risk against transaction costs. Each experiment writes a \
                  criteria CSV, a strategy-path extract, diagnostics and a manifest.",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write artifacts.
    Run {
        config: PathBuf,
        /// Override the configured output directory (also: env LRMHEDGE_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the structural condition checks only (no solving).
    Check { config: PathBuf },
    /// Run the built-in verification suite against the enumeration oracle.
    Oracle,
    /// Simulate and dump the factor/spot paths as CSV to stdout.
    Paths { config: PathBuf },
}

fn load(config: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(config)
        .with_context(|| format!("loading config {}", config.display()))
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, out } => {
            if let Some(dir) = out {
                std::env::set_var(OUTPUT_DIR_ENV, dir);
            }
            let cfg = load(&config)?;
            for w in cfg.warnings() {
                eprintln!("warning: {w}");
            }
            let started = std::time::Instant::now();
            let (output, artifacts) = run_experiment(&cfg)?;
            for w in &output.warnings {
                eprintln!("warning: {w}");
            }
            let l = &output.report_liq;
            let c = &output.report_cls;
            println!("instruments: {}", cfg.instruments_label());
            println!(
                "  T0      liquidity-aware {:.4E}   classical {:.4E}",
                l.t0.value, c.t0.value
            );
            println!(
                "  T0~     liquidity-aware {:.4E}   classical {:.4E}",
                l.t0_tilde.value, c.t0_tilde.value
            );
            println!(
                "  L0      liquidity-aware {:.4E}   classical {:.4E}",
                l.l0.value, c.l0.value
            );
            println!(
                "  C0      liquidity-aware {:.4E}   classical {:.4E}",
                l.c0.value, c.c0.value
            );
            println!("artifacts:");
            for p in [
                Some(&artifacts.criteria_csv),
                Some(&artifacts.strategy_csv),
                Some(&artifacts.diagnostics_json),
                Some(&artifacts.manifest_json),
                artifacts.paths_csv.as_ref(),
                artifacts.prices_csv.as_ref(),
            ]
            .into_iter()
            .flatten()
            {
                println!("  {}", p.display());
            }
            eprintln!("done in {:.1?}", started.elapsed());
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { config } => {
            let cfg = load(&config)?;
            let report = run_condition_check(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.pass() {
                ExitCode::SUCCESS
            } else {
                eprintln!("condition checks failed");
                ExitCode::FAILURE
            })
        }
        Command::Oracle => {
            let report = oracle_suite();
            for case in &report.cases {
                println!(
                    "{} {} ({})",
                    if case.pass { "PASS" } else { "FAIL" },
                    case.name,
                    case.detail
                );
            }
            eprintln!("oracle suite finished in {} ms", report.elapsed_ms);
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Paths { config } => {
            let cfg = load(&config)?;
            let prepared = prepare(&cfg)?;
            print!("{}", paths_to_csv(&prepared.paths));
            Ok(ExitCode::SUCCESS)
        }
    }
}
