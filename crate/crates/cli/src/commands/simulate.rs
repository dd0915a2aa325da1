use std::fs;
use std::path::Path;

use gtf_hsr::degradation::{numeric_rank_policy, simulate_pair, DegradationModel};
use gtf_hsr::io::{read_tensor, write_matrix, write_tensor};
use gtf_hsr::synthetic::generate_scene;
use gtf_hsr::{DenseTensor, TuckerFactors};

use crate::config::{ExperimentConfig, Manifest, ManifestKernel, ManifestSpectral, SceneSource};
use crate::error::CliResult;

pub struct Simulated {
    pub sri: DenseTensor,
    /// Known factors when the scene is synthetic.
    pub truth: Option<TuckerFactors>,
    pub hsi: DenseTensor,
    pub msi: DenseTensor,
    pub model: DegradationModel,
}

/// Builds the SRI and degrades it; `cfg` should already be resolved.
pub fn simulate(cfg: &ExperimentConfig) -> CliResult<Simulated> {
    cfg.check_paths()?;
    let (sri, truth) = match &cfg.scene {
        SceneSource::Synthetic(spec) => {
            let s = generate_scene(spec)?;
            (s.sri, Some(s.truth))
        }
        SceneSource::File { path } => (read_tensor(path)?, None),
    };
    if sri.order() != 3 {
        return Err(crate::error::CliError::input(format!("SRI must be 3-order, got dims {:?}", sri.dims())));
    }
    let kernel = cfg.kernel.build()?;
    let r_spec = cfg.spectral.response(sri.dims()[2])?;
    let policy = numeric_rank_policy(&kernel, cfg.rank_tol)?;
    let (hsi, msi, model) = simulate_pair(&sri, &kernel, &cfg.downsample, &r_spec, policy, cfg.noise)?;
    Ok(Simulated { sri, truth, hsi, msi, model })
}

fn manifest_kernel(model: &DegradationModel) -> ManifestKernel {
    match model.spatial.kernel.as_ref().map(|k| (&k.params, k.radius)) {
        Some((params, radius)) => {
            let mut value = serde_json::to_value(params).expect("kernel params serialize");
            let kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or("custom").to_string();
            if let Some(obj) = value.as_object_mut() {
                obj.remove("kind");
                obj.insert("radius".into(), radius.into());
            }
            ManifestKernel { kind, params: value }
        }
        None => ManifestKernel { kind: "unknown".into(), params: serde_json::Value::Null },
    }
}

/// Writes the observation pair, the SRI, the degradation model and its
/// manifest, and the resolved config into `dir`.
pub fn write_simulation(dir: &Path, cfg: &ExperimentConfig, sim: &Simulated) -> CliResult<Manifest> {
    fs::create_dir_all(dir)?;
    write_tensor(dir.join("sri.dtf"), &sim.sri)?;
    write_tensor(dir.join("hsi.dtf"), &sim.hsi)?;
    write_tensor(dir.join("msi.dtf"), &sim.msi)?;
    let mut pairs = Vec::new();
    for (r, (p1, p2)) in sim.model.spatial.p1.iter().zip(&sim.model.spatial.p2).enumerate() {
        let names = [format!("p1_{}.dtf", r + 1), format!("p2_{}.dtf", r + 1)];
        write_matrix(dir.join(&names[0]), p1)?;
        write_matrix(dir.join(&names[1]), p2)?;
        pairs.push(names);
    }
    write_matrix(dir.join("r_spec.dtf"), &sim.model.r_spec)?;
    if let Some(k) = &sim.model.spatial.kernel {
        write_matrix(dir.join("kernel.dtf"), &k.phi)?;
    }
    let manifest = Manifest {
        kernel: manifest_kernel(&sim.model),
        downsample: sim.model.spatial.downsample.clone().unwrap_or_else(|| cfg.downsample.clone()),
        pairs,
        spectral: ManifestSpectral { windows: cfg.spectral.windows(), response: "r_spec.dtf".into() },
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    fs::write(dir.join("config.json"), cfg.to_json())?;
    Ok(manifest)
}
