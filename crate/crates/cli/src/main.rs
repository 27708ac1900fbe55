//! `lab`: runs one experiment from a JSON config and writes its report.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lab_core::cli_runner::{self, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lab", version, about = "Periodic-orbit experiments on suspension flows over torus maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Use a built-in preset instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory for the report and artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the model's working precision.
    #[arg(long)]
    precision_bits: Option<u32>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    Orbits(RunArgs),
    Shadow(RunArgs),
    Fit(RunArgs),
    Zeta(RunArgs),
    Pressure(RunArgs),
    Proportions(RunArgs),
    Curve(RunArgs),
    Compare(RunArgs),
    Perturb(RunArgs),
    /// List the preset catalog, or print one preset's config.
    Preset { name: Option<String> },
}

fn load(kind: &str, a: &RunArgs) -> Result<ExperimentConfig> {
    let mut c = match (&a.config, &a.preset) {
        (Some(p), None) => cli_runner::load_for_kind(kind, p).with_context(|| format!("loading {}", p.display()))?,
        (None, Some(n)) => cli_runner::preset(n)?,
        _ => bail!("give --config <path> or --preset <name>"),
    };
    if c.experiment.kind() != kind {
        bail!("{} is a {} experiment, not {kind}", c.name, c.experiment.kind());
    }
    if let Some(bits) = a.precision_bits {
        c.model.flow.precision_bits = bits;
        c.validate()?;
    }
    Ok(c)
}

fn run(kind: &str, a: &RunArgs) -> Result<bool> {
    if let Some(k) = a.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().context("configuring the thread pool")?;
    }
    let c = load(kind, a)?;
    let out = cli_runner::run(&c, a.out.as_deref()).with_context(|| format!("experiment {}", c.name))?;
    for x in &out.report.assertions {
        println!("{} {}: {}", if x.passed { "PASS" } else { "FAIL" }, x.name, x.detail);
    }
    match &a.out {
        Some(d) => println!("report: {}", d.join("report.json").display()),
        None => println!("{}", out.report.to_json()),
    }
    eprintln!("{}: {:.2} s", c.name, out.wall_seconds);
    Ok(out.report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.cmd {
        Cmd::Preset { name: None } => {
            for (n, k) in cli_runner::preset_summary() {
                println!("{n}\t{k}");
            }
            return ExitCode::SUCCESS;
        }
        Cmd::Preset { name: Some(n) } => {
            return match cli_runner::preset(n) {
                Ok(c) => {
                    println!("{}", c.to_json());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            };
        }
        Cmd::Orbits(a) => ("orbits", a),
        Cmd::Shadow(a) => ("shadow", a),
        Cmd::Fit(a) => ("fit", a),
        Cmd::Zeta(a) => ("zeta", a),
        Cmd::Pressure(a) => ("pressure", a),
        Cmd::Proportions(a) => ("proportions", a),
        Cmd::Curve(a) => ("curve", a),
        Cmd::Compare(a) => ("compare", a),
        Cmd::Perturb(a) => ("perturb", a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
