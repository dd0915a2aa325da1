use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gtf_cli::config::{ExperimentConfig, KernelSpec, SceneSource, SpectralSpec};
use gtf_hsr::degradation::{urban_band_centers, DownsampleSpec, LANDSAT7_WINDOWS};
use gtf_hsr::io::{read_tensor, write_tensor};
use gtf_hsr::solver::{GammaSpec, SolverConfig};
use gtf_hsr::synthetic::SceneSpec;
use gtf_hsr::DenseTensor;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtf-fuse")).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtf-fuse")).args(args).env(key, value).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn small_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        scene: SceneSource::Synthetic(SceneSpec {
            dims: [16, 16, 8],
            ranks: [8, 8, 4],
            block: [2, 2, 2],
            active_fraction: 0.6,
            ..Default::default()
        }),
        kernel: KernelSpec::Agk { radius: 2, theta: 0.6, a: 0.4, b: 1.3, convention: Default::default() },
        downsample: DownsampleSpec::new(2),
        spectral: SpectralSpec::BandAverage {
            first_nm: 400.0,
            step_nm: 50.0,
            windows: vec![[380.0, 520.0], [520.0, 620.0], [620.0, 760.0]],
        },
        solver: SolverConfig {
            l1: 10,
            l2: 10,
            k1: 8,
            k2: 8,
            c: 4,
            block: [2, 2, 2],
            rho0: 0.1,
            admm_max_iter: 120,
            ..Default::default()
        },
        rank_tol: 1e-8,
        noise: None,
        output_dir: out.to_path_buf(),
        seed: 3,
    }
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("experiment.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn digest_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                let hash = Sha256::digest(fs::read(&path).unwrap());
                out.push((rel, hash.to_vec()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn kernel_reports() {
    let agk = stdout_json(&run(&["kernel", "--agk", "--r", "4", "--theta", "0.19635", "--a", "0.5", "--b", "0.6"]));
    let cond = agk["condition_number"].as_f64().unwrap();
    assert!((cond / 4.4e13).log10().abs() <= 1.0, "condition number {cond}");

    let igk = stdout_json(&run(&["kernel", "--igk", "--r", "4", "--sigma", "3.3973"]));
    assert_eq!(igk["numeric_rank"], 1);

    let delta = stdout_json(&run(&["kernel", "--igk", "--r", "0", "--sigma", "1"]));
    assert_eq!(delta["singular_values"], serde_json::json!([1.0]));
}

#[test]
fn kernel_writes_files_and_rejects_bad_parameters() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("k");
    stdout_json(&run(&["kernel", "--igk", "--r", "2", "--sigma", "1.2", "--out", p(&out)]));
    assert_eq!(read_tensor(out.join("kernel.dtf")).unwrap().dims(), &[5, 5]);
    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("index,singular_value,normalized"));

    let bad = run(&["kernel", "--igk", "--r", "2", "--sigma", "-1"]);
    assert_eq!(code(&bad), 2);
    assert!(!bad.stderr.is_empty());
    assert_ne!(code(&run(&["kernel", "--agk", "--r", "2", "--theta", "0.1"])), 0);
}

#[test]
fn simulate_urban_geometry() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    let mut cfg = small_config(&out);
    cfg.scene = SceneSource::Synthetic(SceneSpec {
        dims: [256, 256, 162],
        ranks: [8, 8, 4],
        block: [4, 4, 2],
        ..Default::default()
    });
    cfg.kernel = KernelSpec::IgkPreset;
    cfg.downsample = DownsampleSpec::new(8);
    cfg.spectral =
        SpectralSpec::Centers { centers_nm: urban_band_centers(), windows: LANDSAT7_WINDOWS.iter().map(|w| [w.0, w.1]).collect() };
    let path = write_config(tmp.path(), &cfg);
    let manifest = stdout_json(&run(&["simulate", "--config", p(&path)]));
    assert_eq!(manifest["pairs"].as_array().unwrap().len(), 1);
    assert_eq!(read_tensor(out.join("hsi.dtf")).unwrap().dims(), &[32, 32, 162]);
    assert_eq!(read_tensor(out.join("msi.dtf")).unwrap().dims(), &[256, 256, 6]);
    let resolved: ExperimentConfig = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved, cfg.resolved());
}

#[test]
fn simulate_identity_copies_the_scene() {
    let tmp = TempDir::new().unwrap();
    let sri = DenseTensor::from_fn(&[6, 5, 4], |i| (i[0] * 7 + i[1] * 3 + i[2]) as f64 * 0.1 - 1.0);
    let sri_path = tmp.path().join("sri_in.dtf");
    write_tensor(&sri_path, &sri).unwrap();
    let out = tmp.path().join("sim");
    let mut cfg = small_config(&out);
    cfg.scene = SceneSource::File { path: sri_path.clone() };
    cfg.kernel = KernelSpec::Delta;
    cfg.downsample = DownsampleSpec::new(1);
    cfg.spectral = SpectralSpec::Identity;
    let path = write_config(tmp.path(), &cfg);
    stdout_json(&run(&["simulate", "--config", p(&path)]));
    assert_eq!(fs::read(out.join("hsi.dtf")).unwrap(), fs::read(&sri_path).unwrap());
    assert_eq!(fs::read(out.join("msi.dtf")).unwrap(), fs::read(&sri_path).unwrap());
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    let path = write_config(tmp.path(), &small_config(&out));
    stdout_json(&run(&["simulate", "--config", p(&path)]));
    let first = digest_dir(&out);
    fs::remove_dir_all(&out).unwrap();
    stdout_json(&run(&["simulate", "--config", p(&path)]));
    assert_eq!(first, digest_dir(&out));
    assert!(first.iter().any(|(f, _)| f == "hsi.dtf"));
}

#[test]
fn simulate_rejects_bad_geometry() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(&tmp.path().join("sim"));
    cfg.downsample = DownsampleSpec::new(3);
    let path = write_config(tmp.path(), &cfg);
    assert_eq!(code(&run(&["simulate", "--config", p(&path)])), 2);
    assert_eq!(code(&run(&["simulate", "--config", p(&tmp.path().join("nope.json"))])), 2);
}

fn simulate_into(tmp: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = write_config(tmp, cfg);
    stdout_json(&run(&["simulate", "--config", p(&path)]));
    path
}

#[test]
fn fuse_identity_recovers_observation() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let mut cfg = small_config(&sim);
    cfg.kernel = KernelSpec::Delta;
    cfg.downsample = DownsampleSpec::new(1);
    cfg.spectral = SpectralSpec::Identity;
    cfg.solver = SolverConfig {
        l1: 8,
        l2: 8,
        k1: 8,
        k2: 8,
        gamma: GammaSpec::Absolute(1e6),
        rho0: 1.0,
        admm_max_iter: 200,
        ..cfg.solver
    };
    let config = simulate_into(tmp.path(), &cfg);
    let out = tmp.path().join("fused");
    let summary = stdout_json(&run(&[
        "fuse",
        "--hsi",
        p(&sim.join("hsi.dtf")),
        "--msi",
        p(&sim.join("msi.dtf")),
        "--manifest",
        p(&sim.join("manifest.json")),
        "--config",
        p(&config),
        "--out",
        p(&out),
    ]));
    assert!(summary["coding_iterations"].as_u64().unwrap() <= 200);
    let hsi = read_tensor(sim.join("hsi.dtf")).unwrap();
    let est = read_tensor(out.join("sri_estimate.dtf")).unwrap();
    assert!(est.relative_error(&hsi) <= 1e-3);
    for f in ["history.json", "residuals.csv", "config.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let solver: SolverConfig = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(solver, cfg.resolved().solver);
}

#[test]
fn fuse_residual_history_trends_down() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let config = simulate_into(tmp.path(), &small_config(&sim));
    let out = tmp.path().join("fused");
    let o = run(&[
        "fuse",
        "--hsi",
        p(&sim.join("hsi.dtf")),
        "--msi",
        p(&sim.join("msi.dtf")),
        "--manifest",
        p(&sim.join("manifest.json")),
        "--config",
        p(&config),
        "--out",
        p(&out),
    ]);
    let summary = stdout_json(&o);
    assert!(summary["kr_used"].as_u64().unwrap() > 1);
    let mut rd = csv::Reader::from_path(out.join("residuals.csv")).unwrap();
    let combined: Vec<f64> =
        rd.deserialize::<std::collections::HashMap<String, f64>>().map(|r| r.unwrap()["combined"]).collect();
    assert!(combined.len() >= 50);
    assert!(combined[49] <= combined[4]);
    assert!(combined[49] < combined[0]);

    // Single pair and a blind kernel run through the same path.
    let trunc = tmp.path().join("trunc");
    let o = run(&[
        "fuse", "--hsi", p(&sim.join("hsi.dtf")), "--msi", p(&sim.join("msi.dtf")), "--manifest",
        p(&sim.join("manifest.json")), "--config", p(&config), "--kr-truncate", "1", "--out", p(&trunc),
    ]);
    assert_eq!(stdout_json(&o)["kr_used"], 1);
    let blind = tmp.path().join("blind");
    let o = run(&[
        "fuse", "--hsi", p(&sim.join("hsi.dtf")), "--msi", p(&sim.join("msi.dtf")), "--manifest",
        p(&sim.join("manifest.json")), "--config", p(&config), "--blind-kernel", p(&sim.join("kernel.dtf")),
        "--out", p(&blind),
    ]);
    stdout_json(&o);
    let a = read_tensor(out.join("sri_estimate.dtf")).unwrap();
    let b = read_tensor(blind.join("sri_estimate.dtf")).unwrap();
    assert!(b.relative_error(&a) <= 1e-6);
}

#[test]
fn fuse_missing_model_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    simulate_into(tmp.path(), &small_config(&sim));
    fs::remove_file(sim.join("p1_1.dtf")).unwrap();
    let out = tmp.path().join("fused");
    let o = run(&[
        "fuse",
        "--hsi",
        p(&sim.join("hsi.dtf")),
        "--msi",
        p(&sim.join("msi.dtf")),
        "--manifest",
        p(&sim.join("manifest.json")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn fuse_abort_keeps_partial_history() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let config = simulate_into(tmp.path(), &small_config(&sim));
    let hsi = read_tensor(sim.join("hsi.dtf")).unwrap();
    let mut data = hsi.data().to_vec();
    // Finite on disk, but squares overflow inside the solver.
    data[5] = 1e300;
    let broken = tmp.path().join("hsi_huge.dtf");
    write_tensor(&broken, &DenseTensor::new(hsi.dims().to_vec(), data).unwrap()).unwrap();
    let out = tmp.path().join("fused");
    let o = run(&[
        "fuse",
        "--hsi",
        p(&broken),
        "--msi",
        p(&sim.join("msi.dtf")),
        "--manifest",
        p(&sim.join("manifest.json")),
        "--config",
        p(&config),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 3, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("history.json").is_file());
    assert!(!out.join("sri_estimate.dtf").exists());
}

#[test]
fn eval_reports() {
    let reference = data("golden_ref.dtf");
    let same = stdout_json(&run(&["eval", "--reference", p(&reference), "--estimate", p(&reference)]));
    assert_eq!(same["psnr_db"], 100.0);
    assert_eq!(same["rmse"], 0.0);
    assert_eq!(same["sam_deg"], 0.0);
    assert_eq!(same["ssim"], 1.0);

    let tmp = TempDir::new().unwrap();
    let got = stdout_json(&run(&[
        "eval",
        "--reference",
        p(&reference),
        "--estimate",
        p(&data("golden_est.dtf")),
        "--per-band",
        "--out",
        p(tmp.path()),
    ]));
    let want: serde_json::Value = serde_json::from_str(&fs::read_to_string(data("golden_report.json")).unwrap()).unwrap();
    for key in ["psnr_db", "rmse", "sam_deg", "ssim", "peak"] {
        let (g, w) = (got[key].as_f64().unwrap(), want[key].as_f64().unwrap());
        assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0), "{key}: {g} vs {w}");
    }
    for key in ["psnr_db", "ssim"] {
        let g = got["per_band"][key].as_array().unwrap();
        let w = want["per_band"][key].as_array().unwrap();
        for (a, b) in g.iter().zip(w) {
            assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() <= 1e-9 * b.as_f64().unwrap().abs().max(1.0));
        }
    }
    assert!(tmp.path().join("per_band.csv").is_file());
    assert!(tmp.path().join("metrics.json").is_file());
}

#[test]
fn eval_input_errors() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["eval", "--reference", p(&tmp.path().join("missing.dtf")), "--estimate", p(&data("golden_est.dtf"))]);
    assert_eq!(code(&o), 2);
    let other = tmp.path().join("other.dtf");
    write_tensor(&other, &DenseTensor::zeros(&[10, 9, 2])).unwrap();
    let o = run(&["eval", "--reference", p(&data("golden_ref.dtf")), "--estimate", p(&other)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn recoverability_reports() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(&tmp.path().join("r"));
    cfg.kernel = KernelSpec::Igk { radius: 1, sigma: 0.8 };
    let path = write_config(tmp.path(), &cfg);
    let report = stdout_json(&run(&["recoverability", "--config", p(&path), "--out", p(tmp.path())]));
    assert_eq!(report["recoverable"], true);
    assert_eq!(report["kr"], 1);
    assert!(tmp.path().join("recoverability.json").is_file());

    let mut s2 = cfg.clone();
    s2.scene = SceneSource::Synthetic(SceneSpec { dims: [16, 16, 2], ranks: [4, 4, 2], block: [2, 2, 1], ..Default::default() });
    s2.spectral = SpectralSpec::Identity;
    let path = write_config(tmp.path(), &s2);
    let report = stdout_json(&run(&["recoverability", "--config", p(&path)]));
    assert_eq!(report["s_ge_3"], false);
    assert_eq!(report["recoverable"], false);
}

#[test]
fn demo_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("demo");
    let o = run(&["demo", "--seed", "3", "--scenario", "igk", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv1 = fs::read(out.join("comparison.csv")).unwrap();
    let first = digest_dir(&out);
    fs::remove_dir_all(&out).unwrap();
    assert_eq!(code(&run(&["demo", "--seed", "3", "--scenario", "igk", "--out", p(&out)])), 0);
    assert_eq!(csv1, fs::read(out.join("comparison.csv")).unwrap());
    assert_eq!(first, digest_dir(&out));
}

#[test]
fn thread_cap_is_validated() {
    let o = run_env(&["kernel", "--igk", "--r", "1", "--sigma", "1"], "GTF_FUSE_THREADS", "1");
    assert_eq!(code(&o), 0);
    let o = run_env(&["kernel", "--igk", "--r", "1", "--sigma", "1"], "GTF_FUSE_THREADS", "zero");
    assert_eq!(code(&o), 2);
}

#[test]
fn experiment_config_roundtrips() {
    let cfg = small_config(Path::new("out/dir"));
    let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);
    let resolved = cfg.resolved();
    assert_eq!(resolved.solver.seed, 3);
    assert!(matches!(&resolved.scene, SceneSource::Synthetic(s) if s.seed == 3));
    let back: ExperimentConfig = serde_json::from_str(&resolved.to_json()).unwrap();
    assert_eq!(back, resolved);
}
