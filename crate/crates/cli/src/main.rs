//! `fbm-sobolev`: sample fBm ensembles, evaluate path functionals, compute
//! spectra and small-ball curves, and run the acceptance suite.
//!
//! Exit codes: 0 success, 1 verification failure or runtime error,
//! 2 invalid arguments or parameter constraints.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbm_sobolev::SamplerTag;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "fbm-sobolev",
    version,
    about = "Fractional Brownian motion path functionals and small-ball experiments"
)]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample an fBm ensemble (binary matrix plus JSON sidecar).
    Sample(SampleArgs),
    /// Evaluate F (and optionally V on [a,b]) on every path of an ensemble.
    Functional(FunctionalArgs),
    /// Nyström eigenpairs of the increment kernel on the triangle.
    Eigen(EigenArgs),
    /// Small-ball probability curve and rate fit.
    Smallball(SmallballArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
    /// Re-run a manifest into another directory and compare digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long = "h")]
    pub h: f64,
    /// Grid points, including t = 0.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(serialize_with = "display")]
    pub sampler: SamplerTag,
    /// Series terms (paley_wiener only).
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FunctionalArgs {
    /// Ensemble binary; the sidecar is the same path with a .json extension.
    #[arg(long)]
    pub ensemble: PathBuf,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub q: f64,
    /// Left end of the path-variance interval.
    #[arg(long, requires = "b")]
    pub a: Option<f64>,
    #[arg(long, requires = "a")]
    pub b: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EigenArgs {
    #[arg(long = "h")]
    pub h: f64,
    #[arg(long)]
    pub mesh_n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum TargetArg {
    #[value(name = "V")]
    V,
    #[value(name = "F")]
    F,
    #[value(name = "DF")]
    Df,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Mc,
    Kl,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SmallballArgs {
    #[arg(long, value_enum)]
    pub target: TargetArg,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long = "h")]
    pub h: f64,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Grid points of the sampled paths, or KL nodes.
    #[arg(long)]
    pub n: usize,
    /// Triangle-mesh grid points for DF (defaults to n).
    #[arg(long)]
    pub mesh_n: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "circulant")]
    #[serde(serialize_with = "display")]
    pub sampler: SamplerTag,
    #[arg(long, default_value_t = 0.0)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long)]
    pub eps_min: f64,
    #[arg(long)]
    pub eps_max: f64,
    #[arg(long)]
    pub eps_points: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 20_240_917)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Replace the closed-form rate constant (harness self-test).
    #[arg(long, hide = true)]
    pub inject_wrong_ch: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli, argv) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code_for(&e))
        }
    }
}
