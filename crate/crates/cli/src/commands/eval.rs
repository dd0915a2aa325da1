use std::fs;
use std::path::Path;

use gtf_hsr::metrics::MetricsReport;
use gtf_hsr::DenseTensor;

use crate::error::{CliError, CliResult};

pub fn evaluate(reference: &DenseTensor, est: &DenseTensor, per_band: bool) -> CliResult<MetricsReport> {
    if reference.dims() != est.dims() {
        return Err(CliError::input(format!("shape mismatch: reference {:?} vs estimate {:?}", reference.dims(), est.dims())));
    }
    Ok(MetricsReport::evaluate(reference, est, per_band)?)
}

/// `metrics.json`, a one-row `metrics.csv` and, when present,
/// `per_band.csv`.
pub fn write_report(dir: &Path, report: &MetricsReport) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.json"), report.to_json())?;
    let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
    w.write_record(["psnr_db", "rmse", "sam_deg", "ssim", "peak"])?;
    w.write_record([report.psnr_db, report.rmse, report.sam_deg, report.ssim, report.peak].map(|v| format!("{v:e}")))?;
    w.flush()?;
    if let Some(pb) = &report.per_band {
        let mut w = csv::Writer::from_path(dir.join("per_band.csv"))?;
        w.write_record(["band", "psnr_db", "ssim"])?;
        for (i, (p, s)) in pb.psnr_db.iter().zip(&pb.ssim).enumerate() {
            w.write_record([(i + 1).to_string(), format!("{p:e}"), format!("{s:e}")])?;
        }
        w.flush()?;
    }
    Ok(())
}
