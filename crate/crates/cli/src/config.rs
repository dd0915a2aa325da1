//! Experiment configuration and the on-disk degradation manifest.

use std::fs;
use std::path::{Path, PathBuf};

use gtf_hsr::degradation::{
    agk_preset, igk_preset, make_agk_with, make_band_average_response, make_custom, make_igk, AgkConvention,
    BlurKernel, DownsampleSpec, NoiseSpec,
};
use gtf_hsr::io::read_matrix;
use gtf_hsr::solver::SolverConfig;
use gtf_hsr::synthetic::SceneSpec;
use gtf_hsr::DenseMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Single-pixel kernel (no blur).
    Delta,
    Igk {
        radius: usize,
        sigma: f64,
    },
    Agk {
        radius: usize,
        theta: f64,
        a: f64,
        b: f64,
        #[serde(default)]
        convention: AgkConvention,
    },
    /// The 9×9 isotropic preset.
    IgkPreset,
    /// One of the four 9×9 anisotropic presets.
    AgkPreset {
        index: usize,
    },
    /// Square kernel stored as a `.dtf` matrix.
    File {
        path: PathBuf,
    },
}

impl KernelSpec {
    pub fn build(&self) -> CliResult<BlurKernel> {
        Ok(match self {
            KernelSpec::Delta => make_igk(0, 1.0)?,
            KernelSpec::Igk { radius, sigma } => make_igk(*radius, *sigma)?,
            KernelSpec::Agk { radius, theta, a, b, convention } => make_agk_with(*radius, *theta, *a, *b, *convention)?,
            KernelSpec::IgkPreset => igk_preset(),
            KernelSpec::AgkPreset { index } => agk_preset(*index)?,
            KernelSpec::File { path } => make_custom(read_matrix(require_file(path)?)?)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralSpec {
    /// MSI bands equal the SRI bands.
    Identity,
    /// SRI band `k` (0-based) is centered at `first_nm + k·step_nm`; MSI
    /// band `j` averages the SRI bands whose centers fall in window `j`.
    BandAverage { first_nm: f64, step_nm: f64, windows: Vec<[f64; 2]> },
    /// As `BandAverage` with explicit SRI band centers.
    Centers { centers_nm: Vec<f64>, windows: Vec<[f64; 2]> },
}

fn band_average(centers: &[f64], windows: &[[f64; 2]]) -> CliResult<DenseMatrix> {
    let win: Vec<(f64, f64)> = windows.iter().map(|w| (w[0], w[1])).collect();
    Ok(make_band_average_response(centers, &win)?)
}

impl SpectralSpec {
    pub fn response(&self, bands: usize) -> CliResult<DenseMatrix> {
        match self {
            SpectralSpec::Identity => Ok(DenseMatrix::identity(bands)),
            SpectralSpec::BandAverage { first_nm, step_nm, windows } => {
                let wl: Vec<f64> = (0..bands).map(|k| first_nm + step_nm * k as f64).collect();
                band_average(&wl, windows)
            }
            SpectralSpec::Centers { centers_nm, windows } => {
                if centers_nm.len() != bands {
                    return Err(CliError::input(format!("{} band centers for {bands} SRI bands", centers_nm.len())));
                }
                band_average(centers_nm, windows)
            }
        }
    }

    pub fn windows(&self) -> Vec<[f64; 2]> {
        match self {
            SpectralSpec::Identity => Vec::new(),
            SpectralSpec::BandAverage { windows, .. } | SpectralSpec::Centers { windows, .. } => windows.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSource {
    /// Seeded synthetic scene; its seed is taken from the experiment seed.
    Synthetic(SceneSpec),
    /// SRI stored as a `.dtf` tensor.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scene: SceneSource,
    pub kernel: KernelSpec,
    pub downsample: DownsampleSpec,
    pub spectral: SpectralSpec,
    pub solver: SolverConfig,
    /// Relative tolerance for the numeric rank of the kernel, which sets
    /// the number of Kronecker pairs kept.
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

fn default_rank_tol() -> f64 {
    1e-8
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(require_file(path)?)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    /// Every referenced input file must exist before a run starts.
    pub fn check_paths(&self) -> CliResult<()> {
        if let SceneSource::File { path } = &self.scene {
            require_file(path)?;
        }
        if let KernelSpec::File { path } = &self.kernel {
            require_file(path)?;
        }
        Ok(())
    }

    /// The experiment seed propagated into the scene, solver and noise.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if let SceneSource::Synthetic(spec) = &mut out.scene {
            spec.seed = self.seed;
        }
        out.solver.seed = self.seed;
        if let Some(n) = &mut out.noise {
            n.seed = self.seed;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn require_file(path: &Path) -> CliResult<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::input(format!("missing file {}", path.display())))
    }
}

/// Describes a degradation model written by `simulate`. Paths are relative
/// to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kernel: ManifestKernel,
    pub downsample: DownsampleSpec,
    /// `[P1^(r), P2^(r)]` matrix files, one entry per Kronecker pair.
    pub pairs: Vec<[String; 2]>,
    pub spectral: ManifestSpectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestKernel {
    pub kind: String,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSpectral {
    pub windows: Vec<[f64; 2]>,
    /// Spectral response matrix file.
    pub response: String,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(require_file(path)?)?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    /// Every file the manifest points at, resolved against `base`.
    pub fn referenced_files(&self, base: &Path) -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = self.pairs.iter().flat_map(|p| p.iter().map(|f| base.join(f))).collect();
        out.push(base.join(&self.spectral.response));
        out
    }
}
