//! Fusion quality indices on `M1×M2×S` cubes.
//!
//! Conventions: PSNR is averaged over bands with a global peak and a 100 dB
//! cap for error-free bands; RMSE is reported after rescaling the reference
//! maximum to 255; SAM is in degrees; SSIM uses 8×8 uniform windows at
//! stride 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 8;

fn check_pair(reference: &DenseTensor, est: &DenseTensor) -> Result<(usize, usize, usize)> {
    if reference.dims() != est.dims() {
        return Err(Error::shape(format!("reference {:?} vs estimate {:?}", reference.dims(), est.dims())));
    }
    match *reference.dims() {
        [a, b, c] => Ok((a, b, c)),
        [a, b] => Ok((a, b, 1)),
        _ => Err(Error::shape("metrics expect a 2- or 3-order tensor")),
    }
}

fn bands(t: &DenseTensor, plane: usize) -> impl Iterator<Item = &[f64]> {
    t.data().chunks(plane)
}

/// Maximum entry of the reference.
pub fn peak_of(reference: &DenseTensor) -> f64 {
    reference.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn psnr_per_band(reference: &DenseTensor, est: &DenseTensor, peak: f64) -> Result<Vec<f64>> {
    let (a, b, _) = check_pair(reference, est)?;
    if !(peak > 0.0) {
        return Err(Error::invalid(format!("peak must be positive, got {peak}")));
    }
    Ok(bands(reference, a * b)
        .zip(bands(est, a * b))
        .map(|(r, e)| {
            let mse = r.iter().zip(e).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / r.len() as f64;
            if mse == 0.0 {
                PSNR_CAP_DB
            } else {
                10.0 * (peak * peak / mse).log10()
            }
        })
        .collect())
}

pub fn psnr(reference: &DenseTensor, est: &DenseTensor, peak: f64) -> Result<f64> {
    let per = psnr_per_band(reference, est, peak)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// RMSE after scaling both cubes by `scale / max(reference)`.
pub fn rmse(reference: &DenseTensor, est: &DenseTensor, scale: f64) -> Result<f64> {
    check_pair(reference, est)?;
    let peak = peak_of(reference);
    if !(peak > 0.0) {
        return Err(Error::invalid("reference maximum must be positive to rescale"));
    }
    let f = scale / peak;
    let mse = reference.data().iter().zip(est.data()).map(|(x, y)| ((x - y) * f).powi(2)).sum::<f64>()
        / reference.len() as f64;
    Ok(mse.sqrt())
}

/// Mean spectral angle in degrees over pixels where both spectra are nonzero.
pub fn sam(reference: &DenseTensor, est: &DenseTensor) -> Result<f64> {
    let (a, b, s) = check_pair(reference, est)?;
    let plane = a * b;
    let (rd, ed) = (reference.data(), est.data());
    let (mut total, mut count) = (0.0, 0usize);
    for p in 0..plane {
        let (mut dot, mut nr, mut ne) = (0.0, 0.0, 0.0);
        for k in 0..s {
            let (x, y) = (rd[p + plane * k], ed[p + plane * k]);
            dot += x * y;
            nr += x * x;
            ne += y * y;
        }
        if nr == 0.0 || ne == 0.0 {
            continue;
        }
        total += (dot / (nr * ne).sqrt()).clamp(-1.0, 1.0).acos().to_degrees();
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("every pixel has a zero-norm spectrum"));
    }
    Ok(total / count as f64)
}

fn ssim_band(r: &[f64], e: &[f64], rows: usize, cols: usize, peak: f64) -> f64 {
    let w = SSIM_WINDOW;
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let n = (w * w) as f64;
    let mut total = 0.0;
    for j0 in 0..=cols - w {
        for i0 in 0..=rows - w {
            let (mut mx, mut my) = (0.0, 0.0);
            for j in j0..j0 + w {
                for i in i0..i0 + w {
                    mx += r[i + rows * j];
                    my += e[i + rows * j];
                }
            }
            mx /= n;
            my /= n;
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for j in j0..j0 + w {
                for i in i0..i0 + w {
                    let dx = r[i + rows * j] - mx;
                    let dy = e[i + rows * j] - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            }
            vx /= n;
            vy /= n;
            cxy /= n;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    total / ((rows - w + 1) * (cols - w + 1)) as f64
}

pub fn ssim_per_band(reference: &DenseTensor, est: &DenseTensor, peak: f64) -> Result<Vec<f64>> {
    let (a, b, _) = check_pair(reference, est)?;
    if a < SSIM_WINDOW || b < SSIM_WINDOW {
        return Err(Error::shape(format!("image {a}x{b} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let plane = a * b;
    Ok(reference
        .data()
        .par_chunks(plane)
        .zip(est.data().par_chunks(plane))
        .map(|(r, e)| ssim_band(r, e, a, b, peak))
        .collect())
}

/// Mean SSIM over windows and bands, with `peak = max(reference)`.
pub fn ssim(reference: &DenseTensor, est: &DenseTensor) -> Result<f64> {
    let per = ssim_per_band(reference, est, peak_of(reference))?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerBand {
    pub psnr_db: Vec<f64>,
    pub ssim: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub rmse: f64,
    pub sam_deg: f64,
    pub ssim: f64,
    pub peak: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_band: Option<PerBand>,
}

impl MetricsReport {
    pub fn evaluate(reference: &DenseTensor, est: &DenseTensor, per_band: bool) -> Result<Self> {
        let peak = peak_of(reference);
        let p = psnr_per_band(reference, est, peak)?;
        let s = ssim_per_band(reference, est, peak)?;
        Ok(Self {
            psnr_db: p.iter().sum::<f64>() / p.len() as f64,
            rmse: rmse(reference, est, 255.0)?,
            sam_deg: sam(reference, est)?,
            ssim: s.iter().sum::<f64>() / s.len() as f64,
            peak,
            per_band: per_band.then_some(PerBand { psnr_db: p, ssim: s }),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
