//! `stolab run <config> [--output-dir D]` and `stolab list [--json]`.
//!
//! Configs are TOML. A `.json` path is read as a previous run's
//! `manifest.json`, whose `config` field reproduces that run.

mod config;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, Experiment};
use output::Outputs;

const DEFAULT_OUTPUT_DIR: &str = "stolab-output";

#[derive(Parser)]
#[command(name = "stolab", version, about = "Experiments on self-consistent transfer operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config or a manifest.json
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// List experiments with their required config keys
    List {
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    Config(ConfigError),
    Runtime(stolab::StoError),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Failure::Config(e) => json!({ "error": "config", "message": e.message, "field": e.field }),
            Failure::Runtime(e) => json!({ "error": e.kind(), "message": e.to_string() }),
        }
    }
}

impl From<stolab::StoError> for Failure {
    fn from(e: stolab::StoError) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List { json } => {
            list(json);
            ExitCode::SUCCESS
        }
        Command::Run { config, output_dir } => {
            let mut dir = output_dir.clone();
            match run(&config, output_dir, &mut dir) {
                Ok(out) => {
                    println!("{}", out.display());
                    ExitCode::SUCCESS
                }
                Err(f) => {
                    let body = f.to_json();
                    eprintln!("{}", serde_json::to_string(&body).expect("plain json"));
                    if let Some(d) = dir {
                        if let Ok(out) = Outputs::create(&d) {
                            let _ = out.json("error.json", &body);
                        }
                    }
                    ExitCode::from(f.exit_code())
                }
            }
        }
    }
}

/// `dir` is set as soon as the output directory is known, so failures can be recorded there.
fn run(path: &Path, override_dir: Option<PathBuf>, dir: &mut Option<PathBuf>) -> Result<PathBuf, Failure> {
    let mut cfg = config::load(path).map_err(Failure::Config)?;
    let out_dir = override_dir.or(cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    *dir = Some(out_dir.clone());
    cfg.output_dir = Some(out_dir.clone());
    let resolved = config::resolve(cfg).map_err(Failure::Config)?;

    let out = Outputs::create(&out_dir)?;
    let manifest = json!({
        "version": stolab::VERSION,
        "experiment": resolved.config.experiment,
        "config": resolved.config,
        "derived": experiments::derived(&resolved)?,
    });
    out.json("manifest.json", &manifest)?;
    experiments::run(&resolved, &out)?;
    Ok(out.dir().to_path_buf())
}

fn list(as_json: bool) {
    if as_json {
        let rows: Vec<_> = Experiment::ALL
            .iter()
            .map(|e| json!({ "name": e.name(), "description": e.description(), "required": e.required_keys() }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&rows).expect("plain json"));
    } else {
        for e in Experiment::ALL {
            println!("{:<17} {:<64} {}", e.name(), e.description(), e.required_keys().join(", "));
        }
    }
}
