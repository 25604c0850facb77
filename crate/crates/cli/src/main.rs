//! `unipotent`: reproducible experiment runs over the core library.
//!
//! Settings are layered: subcommand defaults, then `--config`, then
//! `--set key=value`, then the dedicated flags. Exit codes: 0 when every
//! check passes, 1 on a check failure or a module error, 2 on a config error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{CmdError, Report};
use config::{ConfigError, ExperimentConfig};
use output::Artifacts;

#[derive(Parser)]
#[command(name = "unipotent", version, about = "Exact p-adic experiment runner")]
struct Cli {
    /// `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "P")]
    prime: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    precision: Option<u32>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override one setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Exact identity suites for the group and linearization kernels.
    VerifyIdentities,
    /// Sublevel-set, growth and avoidance sweeps over random polynomials.
    Nondiv,
    /// Limiting quadratic map of a sequence converging to the identity.
    LimitPoly,
    /// Tree sphere, neighbor and action checks.
    Tree,
    /// Exact sphere distributions in a product of two tree quotients.
    SphereDist,
    /// Coverage of congruence quotients by products of two lattices.
    Density,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::VerifyIdentities => "verify-identities",
            Command::Nondiv => "nondiv",
            Command::LimitPoly => "limit-poly",
            Command::Tree => "tree",
            Command::SphereDist => "sphere-dist",
            Command::Density => "density",
        }
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let name = cli.command.name();
    let mut layers = Vec::new();
    if let Some(path) = &cli.config {
        layers.push(config::read_file(path)?);
    }
    let mut sets = Vec::new();
    for s in &cli.set {
        sets.extend(config::parse_pairs(s)?);
    }
    layers.push(sets);
    let flags: Vec<(String, String)> = [
        ("seed", cli.seed.map(|v| v.to_string())),
        ("prime", cli.prime.map(|v| v.to_string())),
        ("precision", cli.precision.map(|v| v.to_string())),
    ]
    .into_iter()
    .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
    .collect();
    layers.push(flags);
    ExperimentConfig::resolve(name, commands::defaults(name), &layers)
}

fn write(cli: &Cli, cfg: &ExperimentConfig, report: &Report) -> std::io::Result<()> {
    let mut art = Artifacts::create(&cli.out, cfg)?;
    for t in &report.tables {
        art.csv(&t.name, &t.header, &t.rows)?;
    }
    for (name, text) in &report.texts {
        art.text(name, text)?;
    }
    art.summary(report.passed, report.result.clone())?;
    art.finish()?;
    Ok(())
}

fn diagnostic(kind: &str, module: Option<&str>, message: &str) {
    eprintln!("{}", json!({ "error": { "kind": kind, "module": module, "message": message } }));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            diagnostic("config", None, &e.to_string());
            return ExitCode::from(2);
        }
    };
    let report = match commands::run(&cfg) {
        Ok(r) => r,
        Err(CmdError::Config(e)) => {
            diagnostic("config", None, &e.to_string());
            return ExitCode::from(2);
        }
        Err(CmdError::Module { module, message }) => {
            diagnostic("module", Some(module), &message);
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write(&cli, &cfg, &report) {
        diagnostic("io", None, &e.to_string());
        return ExitCode::from(1);
    }
    println!("config_hash={}", cfg.hash());
    println!("{}", report.line);
    if report.passed {
        println!("PASS");
        ExitCode::SUCCESS
    } else {
        println!("FAIL");
        ExitCode::from(1)
    }
}
