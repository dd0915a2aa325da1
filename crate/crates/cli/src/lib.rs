//! `gtf-fuse`: simulation, fusion, recoverability analysis and evaluation
//! for hyperspectral super-resolution experiments.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 solver failure.

pub mod commands;
pub mod config;
pub mod error;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gtf_hsr::degradation::{make_agk_with, make_igk, AgkConvention};
use gtf_hsr::io::read_tensor;

use commands::demo::{run_demo, Scenario};
use commands::eval::{evaluate, write_report};
use commands::fuse::{fuse_to_dir, FuseInputs};
use commands::kernel::{analyze_kernel, write_kernel_outputs};
use commands::recover::recoverability;
use commands::simulate::{simulate, write_simulation};
use config::{require_file, ExperimentConfig};
pub use error::{CliError, CliResult, EXIT_INPUT, EXIT_SOLVER};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "GTF_FUSE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gtf-fuse", version, about = "Hyperspectral/multispectral fusion under general spatial blur")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a blur kernel and report its singular values, rank and conditioning.
    Kernel(KernelArgs),
    /// Degrade an SRI into an (HSI, MSI) pair and write the degradation model.
    Simulate(SimulateArgs),
    /// Estimate the SRI from an observation pair.
    Fuse(FuseArgs),
    /// Compare an estimate against a reference.
    Eval(EvalArgs),
    /// Check the rank conditions for exact recovery.
    Recoverability(RecoverabilityArgs),
    /// End-to-end run on the synthetic 64×64×16 scene.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ConventionArg {
    Squared,
    Linear,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("family").required(true).args(["igk", "agk"]))]
pub struct KernelArgs {
    /// Isotropic Gaussian kernel.
    #[arg(long)]
    pub igk: bool,
    /// Anisotropic Gaussian kernel.
    #[arg(long)]
    pub agk: bool,
    /// Kernel radius; the side is 2r+1.
    #[arg(long = "r", default_value_t = 4)]
    pub radius: usize,
    #[arg(long, required_if_eq("igk", "true"))]
    pub sigma: Option<f64>,
    #[arg(long, required_if_eq("agk", "true"))]
    pub theta: Option<f64>,
    #[arg(long = "a", required_if_eq("agk", "true"))]
    pub a: Option<f64>,
    #[arg(long = "b", required_if_eq("agk", "true"))]
    pub b: Option<f64>,
    #[arg(long, value_enum, default_value = "squared")]
    pub convention: ConventionArg,
    /// Relative tolerance for the numeric rank.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Directory for `kernel.dtf`, `spectrum.csv` and `kernel.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub hsi: PathBuf,
    #[arg(long)]
    pub msi: PathBuf,
    /// Degradation manifest written by `simulate`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Solver config, bare or inside an experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Keep only this many Kronecker pairs.
    #[arg(long)]
    pub kr_truncate: Option<usize>,
    /// Use the manifest's Kronecker pairs (default).
    #[arg(long, conflicts_with = "blind_kernel")]
    pub non_blind: bool,
    /// Rebuild the spatial model from an externally estimated kernel (`.dtf` matrix).
    #[arg(long)]
    pub blind_kernel: Option<PathBuf>,
    /// Rank tolerance used with `--blind-kernel`.
    #[arg(long, default_value_t = 1e-8)]
    pub rank_tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub estimate: PathBuf,
    /// Also report per-band PSNR and SSIM.
    #[arg(long)]
    pub per_band: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecoverabilityArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Relative tolerance for the numeric ranks.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "agk3")]
    pub scenario: Scenario,
    #[arg(long, default_value = "demo_out")]
    pub out: PathBuf,
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> CliResult<()> {
    emit(&serde_json::to_string_pretty(v)?)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Kernel(a) => {
            let convention = match a.convention {
                ConventionArg::Squared => AgkConvention::Squared,
                ConventionArg::Linear => AgkConvention::Linear,
            };
            let k = if a.igk {
                make_igk(a.radius, a.sigma.unwrap_or_default())?
            } else {
                let (theta, aa, bb) = (a.theta.unwrap_or_default(), a.a.unwrap_or_default(), a.b.unwrap_or_default());
                make_agk_with(a.radius, theta, aa, bb, convention)?
            };
            let summary = analyze_kernel(&k, a.tol)?;
            if let Some(dir) = &a.out {
                write_kernel_outputs(dir, &k, &summary)?;
            }
            print_json(&summary)
        }
        Command::Simulate(a) => {
            let mut cfg = ExperimentConfig::load(&a.config)?.resolved();
            if let Some(out) = a.out {
                cfg.output_dir = out;
            }
            let sim = simulate(&cfg)?;
            let manifest = write_simulation(&cfg.output_dir, &cfg, &sim)?;
            print_json(&manifest)
        }
        Command::Fuse(a) => {
            let inputs = FuseInputs {
                hsi: a.hsi,
                msi: a.msi,
                manifest: a.manifest,
                config: a.config,
                blind_kernel: a.blind_kernel,
                rank_tol: a.rank_tol,
            };
            let mut loaded = inputs.load()?;
            if a.kr_truncate.is_some() {
                loaded.solver.kr_truncate = a.kr_truncate;
            }
            let result = fuse_to_dir(&a.out, &loaded.hsi, &loaded.msi, &loaded.model, &loaded.solver)?;
            let last = result.history.coding.last();
            print_json(&serde_json::json!({
                "converged": result.converged,
                "kr_used": result.history.kr_used,
                "coding_iterations": result.history.coding.len(),
                "final_combined_residual": last.map(|r| r.combined),
            }))
        }
        Command::Eval(a) => {
            let reference = read_tensor(require_file(&a.reference)?)?;
            let est = read_tensor(require_file(&a.estimate)?)?;
            let report = evaluate(&reference, &est, a.per_band)?;
            if let Some(dir) = &a.out {
                write_report(dir, &report)?;
            }
            emit(&report.to_json())
        }
        Command::Recoverability(a) => {
            let cfg = ExperimentConfig::load(&a.config)?.resolved();
            let report = recoverability(&cfg, a.tol)?;
            if let Some(dir) = &a.out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("recoverability.json"), serde_json::to_string_pretty(&report)?)?;
            }
            print_json(&report)
        }
        Command::Demo(a) => {
            let report = run_demo(a.scenario, a.seed, &a.out)?;
            let mut table =
                format!("{:<10} {:>3} {:>6} {:>10} {:>9} {:>8} {:>8} {:>7}", "run", "kr", "iters", "rel_err", "psnr_db", "rmse", "sam", "ssim");
            for r in &report.rows {
                table += &format!(
                    "\n{:<10} {:>3} {:>6} {:>10.3e} {:>9.3} {:>8.3} {:>8.3} {:>7.4}",
                    r.run, r.kr_used, r.coding_iterations, r.rel_error, r.psnr_db, r.rmse, r.sam_deg, r.ssim
                );
            }
            emit(&table)
        }
    }
}

/// Reads the thread cap from the environment and sizes the global pool.
pub fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| CliError::input(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
    if n == 0 {
        return Err(CliError::input(format!("{THREADS_ENV} must be positive")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::input(format!("thread pool: {e}")))
}
