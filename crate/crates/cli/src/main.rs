//! `conetool`: pole and weight analysis on straight cones, evolution runs on the
//! truncated collar, verification suites and tip exponent studies.

mod analyze;
mod asymptotics;
mod config;
mod error;
mod manifest;
mod solve;
mod svg;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::Config;
use error::{CliError, CliResult};
use manifest::{RunManifest, Summary};

#[derive(Parser)]
#[command(name = "conetool", version, about)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "conetool-out")]
    out: PathBuf,
    /// Seed for randomized initial states and verification pairs.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pole lattice, weight windows, domain, H-infinity verdict and interpolation bracket.
    Analyze {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the configured evolution and write diagnostics.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Run even if the (p, q) conditions fail.
        #[arg(long)]
        force: bool,
        /// Steps between saved rows; overrides `save_every` in the config.
        #[arg(long)]
        save_every: Option<usize>,
    },
    /// Run a verification suite: poles, windows, hinfty, conservation,
    /// comparison, exponents, fractional, weakform, or all.
    Verify { suite: String },
    /// Fit tip exponents from the final snapshot of a previous solve in --out.
    Asymptotics {
        #[arg(long)]
        config: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze { .. } => "analyze",
            Command::Solve { .. } => "solve",
            Command::Verify { .. } => "verify",
            Command::Asymptotics { .. } => "asymptotics",
        }
    }

    fn config_path(&self) -> Option<&Path> {
        match self {
            Command::Analyze { config }
            | Command::Solve { config, .. }
            | Command::Asymptotics { config } => Some(config),
            Command::Verify { .. } => None,
        }
    }
}

struct Done {
    outputs: Vec<PathBuf>,
    message: String,
    details: Vec<String>,
}

fn threads() -> CliResult<usize> {
    match std::env::var("CONETOOL_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
                CliError::Config(format!(
                    "CONETOOL_THREADS must be a positive integer, got '{v}'"
                ))
            })?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(n)
        }
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

fn execute(cli: &Cli, cfg: Option<&Config>) -> Result<Done, (CliError, Vec<PathBuf>, Vec<String>)> {
    let plain = |e: CliError| (e, Vec::new(), Vec::new());
    let out = &cli.out;
    match &cli.command {
        Command::Analyze { .. } => {
            let cfg = cfg.expect("loaded");
            let report = analyze::analyze(cfg).map_err(plain)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| plain(e.into()))?;
            std::fs::create_dir_all(out).map_err(|e| plain(e.into()))?;
            let path = out.join("analysis.json");
            std::fs::write(&path, json.clone() + "\n").map_err(|e| plain(e.into()))?;
            println!("{json}");
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            Ok(Done {
                outputs: vec![path],
                message: format!(
                    "analysis complete with {} warning(s)",
                    report.warnings.len()
                ),
                details: report.warnings.clone(),
            })
        }
        Command::Solve {
            force, save_every, ..
        } => {
            let cfg = cfg.expect("loaded");
            let every = save_every.unwrap_or(cfg.save_every);
            if every == 0 {
                return Err(plain(CliError::Config(
                    "--save-every must be at least 1".into(),
                )));
            }
            let r = solve::solve(cfg, out, *force, every, cli.seed).map_err(plain)?;
            for d in &r.details {
                println!("{d}");
            }
            Ok(Done {
                outputs: r.outputs,
                message: "solve complete".into(),
                details: r.details,
            })
        }
        Command::Verify { suite } => {
            let names: Vec<&str> = if suite == "all" {
                verify::SUITES.to_vec()
            } else {
                vec![suite.as_str()]
            };
            let mut checks = Vec::new();
            for name in names {
                checks.extend(verify::run_suite(name, cli.seed).map_err(plain)?);
            }
            print!("{}", verify::render(&checks));
            std::fs::create_dir_all(out).map_err(|e| plain(e.into()))?;
            let path = out.join(format!("verify_{suite}.json"));
            let json = serde_json::to_string_pretty(&checks).map_err(|e| plain(e.into()))?;
            std::fs::write(&path, json + "\n").map_err(|e| plain(e.into()))?;
            let failed: Vec<String> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{}: {}", c.suite, c.name))
                .collect();
            let message = format!(
                "{} of {} checks passed",
                checks.len() - failed.len(),
                checks.len()
            );
            if failed.is_empty() {
                Ok(Done {
                    outputs: vec![path],
                    message,
                    details: Vec::new(),
                })
            } else {
                Err((CliError::Verification(message), vec![path], failed))
            }
        }
        Command::Asymptotics { .. } => {
            let cfg = cfg.expect("loaded");
            let (table, outputs) = asymptotics::asymptotics(cfg, out).map_err(plain)?;
            print!("{}", asymptotics::render(&table));
            let details = table
                .rows
                .iter()
                .map(|r| format!("mode {}: {}", r.mode, r.status))
                .collect();
            Ok(Done {
                outputs,
                message: "asymptotics complete".into(),
                details,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let threads = match threads() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cfg = match cli.command.config_path().map(Config::load).transpose() {
        Ok(c) => c,
        Err(e) => {
            let e = CliError::from(e);
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let result = execute(&cli, cfg.as_ref());
    let (outputs, summary) = match &result {
        Ok(done) => (
            done.outputs.clone(),
            Summary {
                passed: true,
                exit_code: 0,
                message: done.message.clone(),
                details: done.details.clone(),
            },
        ),
        Err((e, outputs, details)) => (
            outputs.clone(),
            Summary {
                passed: false,
                exit_code: e.exit_code(),
                message: e.to_string(),
                details: details.clone(),
            },
        ),
    };
    let manifest = RunManifest {
        command: cli.command.name().into(),
        config_path: cli.command.config_path().map(|p| p.display().to_string()),
        config: cfg.map(|c| c.resolved).unwrap_or_default(),
        seed: cli.seed,
        threads,
        versions: RunManifest::versions(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
        summary,
    };
    if let Err(e) = manifest.write(&cli.out) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(2);
    }
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err((e, _, _)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
