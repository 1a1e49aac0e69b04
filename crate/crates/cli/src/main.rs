use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rsma_mimo::harness::{
    run_campaign, run_sweep, run_validation, write_campaign, write_sweep, write_validation,
    ExperimentConfig,
};
use rsma_mimo::Error;

#[derive(Parser)]
#[command(name = "rsma-sim", version, about = "RS vs NoRS downlink SE campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Campaign config (flat TOML).
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir`, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs every setup and scheme and writes CSV + JSON.
    Run(Common),
    /// Checks closed-form coefficients against Monte Carlo.
    Validate(Common),
    /// Repeats the campaign over values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `20,40,60`.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
}

fn load(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&c.config)
        .with_context(|| format!("loading {}", c.config.display()))?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, out))
}

fn report(paths: &[&Path]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, out) = load(&c)?;
            let campaign = run_campaign(&cfg)?;
            let (csv, json) = write_campaign(&out, &campaign)?;
            report(&[&csv, &json]);
        }
        Command::Validate(c) => {
            let (cfg, out) = load(&c)?;
            let v = run_validation(&cfg)?;
            let worst = v.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
            eprintln!(
                "max relative coefficient error over {} setups: {worst:.3e}",
                v.len()
            );
            report(&[&write_validation(&out, &cfg, &v)?]);
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let (cfg, out) = load(&common)?;
            let points = run_sweep(&cfg, &param, &values)?;
            let (csv, json) = write_sweep(&out, &cfg, &param, &points)?;
            report(&[&csv, &json]);
        }
    }
    Ok(())
}

fn error_json(e: &anyhow::Error) -> serde_json::Value {
    let mut v = serde_json::json!({ "error": format!("{e:#}") });
    if let Some(Error::Setup {
        setup,
        seed,
        stream,
        ..
    }) = e.downcast_ref::<Error>()
    {
        v["setup"] = (*setup).into();
        v["seed"] = (*seed).into();
        v["stream"] = (*stream).into();
    }
    v
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
