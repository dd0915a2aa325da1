use std::fs;
use std::path::{Path, PathBuf};

use gtf_hsr::degradation::{build_spatial_degradations, make_custom, numeric_rank_policy, DegradationModel, SpatialOperator};
use gtf_hsr::io::{read_matrix, read_tensor, write_tensor};
use gtf_hsr::solver::{fuse, FusionFailure, FusionResult, IterationRecord, RunHistory, SolverConfig, Stage};
use gtf_hsr::DenseTensor;

use crate::config::{require_file, ExperimentConfig, Manifest};
use crate::error::{CliError, CliResult};

/// Accepts either a bare solver config or an experiment config and
/// returns the solver part, with the experiment seed applied.
pub fn load_solver_config(path: &Path) -> CliResult<SolverConfig> {
    let text = fs::read_to_string(require_file(path)?)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let bad = |e: serde_json::Error| CliError::input(format!("{}: {e}", path.display()));
    if value.get("solver").is_some() {
        let exp: ExperimentConfig = serde_json::from_value(value).map_err(bad)?;
        return Ok(exp.resolved().solver);
    }
    serde_json::from_value(value).map_err(bad)
}

pub struct FuseInputs {
    pub hsi: PathBuf,
    pub msi: PathBuf,
    pub manifest: PathBuf,
    pub config: Option<PathBuf>,
    pub blind_kernel: Option<PathBuf>,
    pub rank_tol: f64,
}

pub struct LoadedInputs {
    pub hsi: DenseTensor,
    pub msi: DenseTensor,
    pub model: DegradationModel,
    pub solver: SolverConfig,
}

impl FuseInputs {
    /// Fails before anything is written if an input is missing.
    pub fn check(&self) -> CliResult<Manifest> {
        for p in [&self.hsi, &self.msi, &self.manifest].into_iter().chain(&self.config).chain(&self.blind_kernel) {
            require_file(p)?;
        }
        let manifest = Manifest::load(&self.manifest)?;
        let base = self.manifest.parent().unwrap_or(Path::new("."));
        for f in manifest.referenced_files(base) {
            require_file(&f)?;
        }
        Ok(manifest)
    }

    pub fn load(&self) -> CliResult<LoadedInputs> {
        let manifest = self.check()?;
        let base = self.manifest.parent().unwrap_or(Path::new("."));
        let hsi = read_tensor(&self.hsi)?;
        let msi = read_tensor(&self.msi)?;
        let r_spec = read_matrix(base.join(&manifest.spectral.response))?;
        let spatial = match &self.blind_kernel {
            Some(path) => {
                if msi.order() != 3 {
                    return Err(CliError::input("MSI must be 3-order"));
                }
                let k = make_custom(read_matrix(path)?)?;
                let policy = numeric_rank_policy(&k, self.rank_tol)?;
                build_spatial_degradations(&k, msi.dims()[0], msi.dims()[1], &manifest.downsample, policy)?
            }
            None => {
                let mut p1 = Vec::new();
                let mut p2 = Vec::new();
                for [a, b] in &manifest.pairs {
                    p1.push(read_matrix(base.join(a))?);
                    p2.push(read_matrix(base.join(b))?);
                }
                SpatialOperator::new(p1, p2)?
            }
        };
        let model = DegradationModel::new(spatial, r_spec)?;
        let solver = match &self.config {
            Some(p) => load_solver_config(p)?,
            None => SolverConfig::default(),
        };
        Ok(LoadedInputs { hsi, msi, model, solver })
    }
}

fn write_records(path: &Path, records: &[IterationRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record([
            "iteration",
            "rho",
            "x_residual",
            "y_residual",
            "consensus",
            "combined",
            "objective",
            "rel_change",
            "prox_unconverged",
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_history(dir: &Path, history: &RunHistory) -> CliResult<()> {
    fs::write(dir.join("history.json"), serde_json::to_string_pretty(history)?)?;
    write_records(&dir.join("residuals.csv"), &history.coding)?;
    if let Some(cfg) = &history.config {
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    }
    Ok(())
}

/// Runs fusion and writes `sri_estimate.dtf`, `history.json`,
/// `residuals.csv` and `config.json` into `dir`. A setup failure writes
/// nothing; a later failure writes the partial history.
pub fn fuse_to_dir(
    dir: &Path,
    hsi: &DenseTensor,
    msi: &DenseTensor,
    model: &DegradationModel,
    cfg: &SolverConfig,
) -> CliResult<FusionResult> {
    match fuse(hsi, msi, model, cfg) {
        Ok(result) => {
            fs::create_dir_all(dir)?;
            write_tensor(dir.join("sri_estimate.dtf"), &result.sri_estimate)?;
            write_history(dir, &result.history)?;
            Ok(result)
        }
        Err(FusionFailure { stage: Stage::Setup, error, .. }) => Err(CliError::input(error.to_string())),
        Err(f) => {
            fs::create_dir_all(dir)?;
            write_history(dir, &f.history)?;
            let stage = serde_json::to_value(f.stage)?.as_str().unwrap_or("unknown").to_string();
            Err(CliError::Solver { stage, message: f.error.to_string() })
        }
    }
}
