//! `rcdc`: run simulator scenarios from the command line.
//!
//! `rcdc run <scenario> --config <path> --seed <u64> --out <dir>` executes
//! one scenario and writes its CSV tables plus a `manifest.json` run record
//! into the output directory. `rcdc print-config` dumps the commented
//! default configuration.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use rcdc_core::experiments::{self, ScenarioConfig, ScenarioKind};

#[derive(Parser)]
#[command(name = "rcdc", version, about = "Reliable coded distributed computing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its outputs.
    Run {
        /// One of: attack, misbehavior, task-sweep, selection, full, ledger-bench.
        scenario: String,
        /// Configuration file (key = value lines); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed, overriding the config file's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override any config key, e.g. `--override workers=50`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the commented default configuration.
    PrintConfig,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::PrintConfig => {
            print!("{}", experiments::default_config_text());
            Ok(())
        }
        Command::Run { scenario, config, seed, out, overrides } => {
            run(scenario, config, seed, out, overrides)
        }
    }
}

fn run(
    scenario: String,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: PathBuf,
    overrides: Vec<String>,
) -> Result<()> {
    let kind: ScenarioKind = scenario.parse().map_err(anyhow::Error::msg)?;

    let mut cfg = match &config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            ScenarioConfig::parse(&text)?
        }
        None => ScenarioConfig::default(),
    };
    for pair in &overrides {
        let (key, value) = pair
            .split_once('=')
            .with_context(|| format!("override {pair:?} is not KEY=VALUE"))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    let started = Instant::now();
    let output = experiments::run_scenario(kind, &cfg)?;
    let wall_time_ms = started.elapsed().as_millis() as u64;

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for (name, contents) in &output.files {
        let path = out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        written.push(name.clone());
        println!("wrote {}", path.display());
    }

    let manifest = serde_json::json!({
        "scenario": kind.name(),
        "seed": cfg.seed,
        "code_version": env!("CARGO_PKG_VERSION"),
        "wall_time_ms": wall_time_ms,
        "outputs": written,
        "config": cfg,
    });
    let manifest_path = out.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}
