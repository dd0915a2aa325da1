use std::fs;
use std::path::Path;

use gtf_hsr::degradation::{kernel_spectrum, BlurKernel, KernelParams};
use gtf_hsr::io::write_matrix;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub params: KernelParams,
    pub radius: usize,
    pub rank_tol: f64,
    pub numeric_rank: usize,
    /// `None` when the kernel is singular.
    pub condition_number: Option<f64>,
    pub singular_values: Vec<f64>,
}

pub fn analyze_kernel(k: &BlurKernel, rank_tol: f64) -> CliResult<KernelSummary> {
    let cond = k.condition_number()?;
    Ok(KernelSummary {
        params: k.params.clone(),
        radius: k.radius,
        rank_tol,
        numeric_rank: k.rank(rank_tol)?,
        condition_number: cond.is_finite().then_some(cond),
        singular_values: kernel_spectrum(k)?,
    })
}

/// Writes `kernel.dtf`, `spectrum.csv` and `kernel.json` into `dir`.
pub fn write_kernel_outputs(dir: &Path, k: &BlurKernel, summary: &KernelSummary) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    write_matrix(dir.join("kernel.dtf"), &k.phi)?;
    let mut w = csv::Writer::from_path(dir.join("spectrum.csv"))?;
    w.write_record(["index", "singular_value", "normalized"])?;
    let top = summary.singular_values.first().copied().unwrap_or(0.0);
    for (i, s) in summary.singular_values.iter().enumerate() {
        let norm = if top > 0.0 { s / top } else { 0.0 };
        w.write_record([(i + 1).to_string(), format!("{s:e}"), format!("{norm:e}")])?;
    }
    w.flush()?;
    fs::write(dir.join("kernel.json"), serde_json::to_string_pretty(summary)?)?;
    Ok(())
}
