//! Seeded synthetic scenes with an exact block-sparse Tucker structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::orthonormalize;
use crate::matrix::DenseMatrix;
use crate::sparsity::BlockShape;
use crate::tensor::{tucker_reconstruct, DenseTensor, TuckerFactors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub dims: [usize; 3],
    pub ranks: [usize; 3],
    pub block: [usize; 3],
    /// Fraction of core blocks that are nonzero (at least one is kept).
    pub active_fraction: f64,
    /// Gaussian smoothing width (in samples) for spatial and spectral
    /// factor columns before orthonormalization.
    pub spatial_smoothing: f64,
    pub spectral_smoothing: f64,
    /// Core entry `(i1, i2, i3)` is scaled by
    /// `exp(−decay·(i1/L1 + i2/L2 + i3/C))`; later factor columns are
    /// rougher, so this mimics the spectral decay of natural scenes.
    pub core_decay: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            dims: [64, 64, 16],
            ranks: [32, 32, 6],
            block: [8, 8, 3],
            active_fraction: 0.5,
            spatial_smoothing: 1.5,
            spectral_smoothing: 2.0,
            core_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub sri: DenseTensor,
    pub truth: TuckerFactors,
}

fn smooth_columns(m: &DenseMatrix, width: f64) -> DenseMatrix {
    if width <= 0.0 {
        return m.clone();
    }
    let radius = (3.0 * width).ceil() as i64;
    let w: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * width * width)).exp()).collect();
    let n = m.rows() as i64;
    DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| {
        let mut acc = 0.0;
        for (o, wk) in (-radius..=radius).zip(&w) {
            // Reflect at the borders.
            let mut p = i as i64 + o;
            while p < 0 || p >= n {
                p = if p < 0 { -p - 1 } else { 2 * n - p - 1 };
            }
            acc += wk * m.get(p as usize, j);
        }
        acc
    })
}

fn smooth_basis(rng: &mut ChaCha8Rng, rows: usize, cols: usize, width: f64) -> DenseMatrix {
    let g = DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng));
    orthonormalize(&smooth_columns(&g, width))
}

/// Builds `Z = G ×1 U1 ×2 U2 ×3 U3` with a block-sparse `G` and smooth
/// orthonormal factors, scaled so that `max|Z| = 1`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    for n in 0..3 {
        if spec.ranks[n] == 0 || spec.ranks[n] > spec.dims[n] {
            return Err(Error::invalid(format!("rank {} outside 1..={} on mode {}", spec.ranks[n], spec.dims[n], n + 1)));
        }
    }
    if !(spec.active_fraction > 0.0 && spec.active_fraction <= 1.0) {
        return Err(Error::invalid(format!("active fraction {} outside (0, 1]", spec.active_fraction)));
    }
    let bs = BlockShape::new(spec.block.to_vec())?;
    let counts = bs.counts(&spec.ranks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let u1 = smooth_basis(&mut rng, spec.dims[0], spec.ranks[0], spec.spatial_smoothing);
    let u2 = smooth_basis(&mut rng, spec.dims[1], spec.ranks[1], spec.spatial_smoothing);
    let u3 = smooth_basis(&mut rng, spec.dims[2], spec.ranks[2], spec.spectral_smoothing);

    let n_blocks: usize = counts.iter().product();
    let mut active: Vec<bool> = (0..n_blocks).map(|_| rng.random::<f64>() < spec.active_fraction).collect();
    if !active.iter().any(|&a| a) {
        active[0] = true;
    }
    let core = DenseTensor::from_fn(&spec.ranks, |idx| {
        let b = (idx[0] / spec.block[0]) + counts[0] * ((idx[1] / spec.block[1]) + counts[1] * (idx[2] / spec.block[2]));
        let v: f64 = StandardNormal.sample(&mut rng);
        if active[b] {
            let pos: f64 = (0..3).map(|n| idx[n] as f64 / spec.ranks[n] as f64).sum();
            v * (-spec.core_decay * pos).exp()
        } else {
            0.0
        }
    });

    let mut truth = TuckerFactors::new(core, u1, u2, u3)?;
    let sri = tucker_reconstruct(&truth)?;
    let peak = sri.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::invalid("generated scene is identically zero"));
    }
    truth.core = truth.core.scale(1.0 / peak);
    Ok(Scene { sri: sri.scale(1.0 / peak), truth })
}
