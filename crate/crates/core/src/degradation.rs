//! Blur kernels and the observation model.
//!
//! A `(2r+1)×(2r+1)` kernel `Φ = Σ_r u_r v_rᵀ` acting by periodic correlation
//! followed by uniform downsampling factors into per-mode operators
//! `P1^(r) = S1·T(u_r)` and `P2^(r) = S2·T(v_r)`, with `T(·)` circulant and
//! `S` a row selection. The HSI is `X = Σ_r Z ×1 P1^(r) ×2 P2^(r)` and the
//! MSI is `Y = Z ×3 R`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kronecker::{kron, RankPolicy};
use crate::linalg::{rank_from_spectrum, singular_values, svd_truncate};
use crate::matrix::DenseMatrix;
use crate::tensor::{mode_product, DenseTensor};

/// Entry cap for [`build_dense_d`].
pub const DENSE_D_MAX_ENTRIES: usize = 100_000_000;

/// How the AGK precision matrix is formed from the axis parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgkConvention {
    /// `Λ = Rot·diag(a², b²)·Rotᵀ`; `a`, `b` are inverse standard deviations.
    #[default]
    Squared,
    /// `Λ = Rot·diag(a, b)·Rotᵀ`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelParams {
    Igk {
        sigma: f64,
    },
    Agk {
        theta: f64,
        a: f64,
        b: f64,
        #[serde(default)]
        convention: AgkConvention,
    },
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    pub radius: usize,
    pub phi: DenseMatrix,
    pub params: KernelParams,
}

impl BlurKernel {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Numeric rank of `Φ`.
    pub fn rank(&self, rel_tol: f64) -> Result<usize> {
        Ok(rank_from_spectrum(&kernel_spectrum(self)?, rel_tol))
    }

    /// `σ_max / σ_min` of `Φ`; infinite when singular.
    pub fn condition_number(&self) -> Result<f64> {
        let s = kernel_spectrum(self)?;
        let last = *s.last().expect("nonempty spectrum");
        Ok(if last > 0.0 { s[0] / last } else { f64::INFINITY })
    }
}

fn normalized(mut phi: DenseMatrix) -> DenseMatrix {
    let total: f64 = phi.data().iter().sum();
    if total != 0.0 {
        for v in phi.data_mut() {
            *v /= total;
        }
    }
    phi
}

pub fn make_igk(radius: usize, sigma: f64) -> Result<BlurKernel> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("IGK sigma must be positive, got {sigma}")));
    }
    let r = radius as f64;
    // Separable construction keeps the kernel exactly rank one.
    let g: Vec<f64> =
        (0..2 * radius + 1).map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let phi = DenseMatrix::from_fn(g.len(), g.len(), |i, j| g[i] * g[j]);
    Ok(BlurKernel { radius, phi: normalized(phi), params: KernelParams::Igk { sigma } })
}

pub fn make_agk(radius: usize, theta: f64, a: f64, b: f64) -> Result<BlurKernel> {
    make_agk_with(radius, theta, a, b, AgkConvention::default())
}

pub fn make_agk_with(radius: usize, theta: f64, a: f64, b: f64, convention: AgkConvention) -> Result<BlurKernel> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::invalid(format!("AGK axis parameters must be positive, got a={a}, b={b}")));
    }
    if !theta.is_finite() {
        return Err(Error::invalid("AGK theta must be finite"));
    }
    let (pa, pb) = match convention {
        AgkConvention::Squared => (a * a, b * b),
        AgkConvention::Linear => (a, b),
    };
    let (c, s) = (theta.cos(), theta.sin());
    let l11 = c * c * pa + s * s * pb;
    let l22 = s * s * pa + c * c * pb;
    let l12 = c * s * (pa - pb);
    let r = radius as f64;
    let phi = DenseMatrix::from_fn(2 * radius + 1, 2 * radius + 1, |i, j| {
        let (x, y) = (i as f64 - r, j as f64 - r);
        (-0.5 * (l11 * x * x + 2.0 * l12 * x * y + l22 * y * y)).exp()
    });
    Ok(BlurKernel { radius, phi: normalized(phi), params: KernelParams::Agk { theta, a, b, convention } })
}

/// The four anisotropic kernels used in the experiments (index 1..=4), 9×9.
pub fn agk_preset(index: usize) -> Result<BlurKernel> {
    let pi16 = std::f64::consts::PI / 16.0;
    let (theta, a, b) = match index {
        1 => (pi16, 0.5, 0.6),
        2 => (2.0 * pi16, 0.3, 0.9),
        3 => (3.0 * pi16, 0.3, 1.2),
        4 => (4.0 * pi16, 0.3, 1.5),
        _ => return Err(Error::invalid(format!("AGK preset index must be 1..=4, got {index}"))),
    };
    make_agk(4, theta, a, b)
}

/// Isotropic kernel used in the experiments: 9×9, σ = 3.3973.
pub fn igk_preset() -> BlurKernel {
    make_igk(4, 3.3973).expect("valid preset")
}

/// Wraps a user-supplied square kernel of odd side. No normalization.
pub fn make_custom(phi: DenseMatrix) -> Result<BlurKernel> {
    let (r, c) = phi.shape();
    if r != c || r % 2 == 0 {
        return Err(Error::shape(format!("custom kernel must be square with odd side, got {r}x{c}")));
    }
    Ok(BlurKernel { radius: r / 2, phi, params: KernelParams::Custom })
}

/// Singular values of `Φ`, descending.
pub fn kernel_spectrum(k: &BlurKernel) -> Result<Vec<f64>> {
    singular_values(&k.phi)
}

/// `T = Σ_l v[l]·J^{M−shift+l}` (1-based `l`), so
/// `(T x)[i] = Σ_l v[l]·x[(i + l − shift) mod M]`.
pub fn build_circulant(v: &[f64], m_size: usize, shift: i64) -> Result<DenseMatrix> {
    if v.is_empty() {
        return Err(Error::invalid("empty kernel vector"));
    }
    if v.len() > m_size {
        return Err(Error::shape(format!("kernel length {} exceeds signal length {m_size}", v.len())));
    }
    let m = m_size as i64;
    let mut t = DenseMatrix::zeros(m_size, m_size);
    for i in 0..m_size {
        for (l0, &w) in v.iter().enumerate() {
            let j = (i as i64 + l0 as i64 + 1 - shift).rem_euclid(m) as usize;
            t.set(i, j, t.get(i, j) + w);
        }
    }
    Ok(t)
}

/// Rows `e_{k·d + offset}` of `I_M`.
pub fn build_selection(big: usize, factor: usize, offset: usize) -> Result<DenseMatrix> {
    if factor == 0 || !big.is_multiple_of(factor) {
        return Err(Error::invalid(format!("downsampling factor {factor} does not divide {big}")));
    }
    if offset >= factor {
        return Err(Error::invalid(format!("offset {offset} must be below factor {factor}")));
    }
    Ok(DenseMatrix::from_fn(big / factor, big, |k, j| if j == k * factor + offset { 1.0 } else { 0.0 }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownsampleSpec {
    pub factor: usize,
    #[serde(default)]
    pub offsets: [usize; 2],
    /// Convolution center `(m′, n′)`, 1-based; `None` centers the kernel.
    #[serde(default)]
    pub shift: Option<[i64; 2]>,
}

impl DownsampleSpec {
    pub fn new(factor: usize) -> Self {
        Self { factor, offsets: [0, 0], shift: None }
    }

    pub fn resolved_shift(&self, radius: usize) -> [i64; 2] {
        self.shift.unwrap_or([radius as i64 + 1; 2])
    }

    fn validate(&self, m1: usize, m2: usize) -> Result<()> {
        for (big, off) in [(m1, self.offsets[0]), (m2, self.offsets[1])] {
            if self.factor == 0 || big % self.factor != 0 {
                return Err(Error::invalid(format!("downsampling factor {} does not divide {big}", self.factor)));
            }
            if off >= self.factor {
                return Err(Error::invalid(format!("offset {off} must be below factor {}", self.factor)));
            }
        }
        Ok(())
    }
}

/// The spatial half of the observation model: paired per-mode operators.
#[derive(Debug, Clone)]
pub struct SpatialOperator {
    pub p1: Vec<DenseMatrix>,
    pub p2: Vec<DenseMatrix>,
    pub kernel: Option<BlurKernel>,
    pub downsample: Option<DownsampleSpec>,
}

impl SpatialOperator {
    pub fn new(p1: Vec<DenseMatrix>, p2: Vec<DenseMatrix>) -> Result<Self> {
        let op = Self { p1, p2, kernel: None, downsample: None };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p1.is_empty() || self.p1.len() != self.p2.len() {
            return Err(Error::shape(format!(
                "need equal nonempty pair lists, got {} and {}",
                self.p1.len(),
                self.p2.len()
            )));
        }
        let (s1, s2) = (self.p1[0].shape(), self.p2[0].shape());
        if self.p1.iter().any(|p| p.shape() != s1) || self.p2.iter().any(|p| p.shape() != s2) {
            return Err(Error::shape("pair matrices differ in shape"));
        }
        Ok(())
    }

    /// Number of Kronecker pairs.
    pub fn kr(&self) -> usize {
        self.p1.len()
    }

    /// `(m1, m2)`.
    pub fn low_dims(&self) -> (usize, usize) {
        (self.p1[0].rows(), self.p2[0].rows())
    }

    /// `(M1, M2)`.
    pub fn high_dims(&self) -> (usize, usize) {
        (self.p1[0].cols(), self.p2[0].cols())
    }

    /// Keeps the first `n` pairs.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("truncation count must be positive"));
        }
        let n = n.min(self.kr());
        Ok(Self {
            p1: self.p1[..n].to_vec(),
            p2: self.p2[..n].to_vec(),
            kernel: self.kernel.clone(),
            downsample: self.downsample.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct DegradationModel {
    pub spatial: SpatialOperator,
    pub r_spec: DenseMatrix,
}

impl DegradationModel {
    pub fn new(spatial: SpatialOperator, r_spec: DenseMatrix) -> Result<Self> {
        spatial.validate()?;
        Ok(Self { spatial, r_spec })
    }

    pub fn kr(&self) -> usize {
        self.spatial.kr()
    }

    pub fn truncated(&self, n: usize) -> Result<Self> {
        Ok(Self { spatial: self.spatial.truncated(n)?, r_spec: self.r_spec.clone() })
    }
}

/// Splits `Φ` by SVD (rank chosen by `policy`) and builds
/// `P1^(r) = S1·T(√σ_r u_r)`, `P2^(r) = S2·T(√σ_r v_r)`.
pub fn build_spatial_degradations(
    k: &BlurKernel,
    m1: usize,
    m2: usize,
    ds: &DownsampleSpec,
    policy: RankPolicy,
) -> Result<SpatialOperator> {
    ds.validate(m1, m2)?;
    if k.side() > m1.min(m2) {
        return Err(Error::shape(format!("kernel side {} exceeds scene extent {}", k.side(), m1.min(m2))));
    }
    let spectrum = kernel_spectrum(k)?;
    let rank = policy.select(&spectrum)?;
    let svd = svd_truncate(&k.phi, rank)?;
    let s1 = build_selection(m1, ds.factor, ds.offsets[0])?;
    let s2 = build_selection(m2, ds.factor, ds.offsets[1])?;
    let [sh1, sh2] = ds.resolved_shift(k.radius);
    let mut p1 = Vec::with_capacity(rank);
    let mut p2 = Vec::with_capacity(rank);
    for r in 0..rank {
        let root = svd.s[r].sqrt();
        let u: Vec<f64> = svd.u.column(r).iter().map(|x| x * root).collect();
        let v: Vec<f64> = svd.v.column(r).iter().map(|x| x * root).collect();
        p1.push(s1.dot(&build_circulant(&u, m1, sh1)?));
        p2.push(s2.dot(&build_circulant(&v, m2, sh2)?));
    }
    Ok(SpatialOperator { p1, p2, kernel: Some(k.clone()), downsample: Some(ds.clone()) })
}

/// Policy keeping every singular value of `Φ` above `rel_tol·σ_max`.
pub fn numeric_rank_policy(k: &BlurKernel, rel_tol: f64) -> Result<RankPolicy> {
    Ok(RankPolicy::Exact { rank: k.rank(rel_tol)?.max(1) })
}

/// `D = Σ_r (P2^(r) ⊗ P1^(r))ᵀ ∈ ℝ^{M1M2 × m1m2}`.
pub fn build_dense_d(op: &SpatialOperator) -> Result<DenseMatrix> {
    op.validate()?;
    let (lo1, lo2) = op.low_dims();
    let (hi1, hi2) = op.high_dims();
    let entries = (hi1 * hi2).saturating_mul(lo1 * lo2);
    if entries > DENSE_D_MAX_ENTRIES {
        return Err(Error::TooLarge(format!("dense D would have {entries} entries")));
    }
    let mut d = DenseMatrix::zeros(hi1 * hi2, lo1 * lo2);
    for (a, b) in op.p1.iter().zip(&op.p2) {
        d.axpy(1.0, &kron(b, a).transpose());
    }
    Ok(d)
}

/// `X = Σ_r Z ×1 P1^(r) ×2 P2^(r)`.
pub fn apply_spatial(z: &DenseTensor, op: &SpatialOperator) -> Result<DenseTensor> {
    op.validate()?;
    if z.order() != 3 {
        return Err(Error::shape(format!("expected a 3-order tensor, got order {}", z.order())));
    }
    let mut acc: Option<DenseTensor> = None;
    for (a, b) in op.p1.iter().zip(&op.p2) {
        let term = mode_product(&mode_product(z, a, 1)?, b, 2)?;
        match acc.as_mut() {
            Some(x) => x.axpy(1.0, &term),
            None => acc = Some(term),
        }
    }
    Ok(acc.expect("at least one pair"))
}

/// Direct periodic correlation with `Φ` evaluated only at the retained
/// sample positions:
/// `X[k1,k2,s] = Σ_{l,q} Φ[l,q]·Z[i1 − m′ + l, i2 − n′ + q, s]` with
/// `i_n = k_n·d + offset_n` and 1-based `l, q`.
pub fn apply_spatial_conv(z: &DenseTensor, k: &BlurKernel, ds: &DownsampleSpec) -> Result<DenseTensor> {
    if z.order() != 3 {
        return Err(Error::shape(format!("expected a 3-order tensor, got order {}", z.order())));
    }
    let (big1, big2, bands) = (z.dims()[0], z.dims()[1], z.dims()[2]);
    ds.validate(big1, big2)?;
    if k.side() > big1.min(big2) {
        return Err(Error::shape(format!("kernel side {} exceeds scene extent {}", k.side(), big1.min(big2))));
    }
    let (lo1, lo2) = (big1 / ds.factor, big2 / ds.factor);
    let [sh1, sh2] = ds.resolved_shift(k.radius);
    let side = k.side();
    let slab = lo1 * lo2;
    let mut out = vec![0.0; slab * bands];
    out.par_chunks_mut(slab).enumerate().for_each(|(s, dst)| {
        let src = &z.data()[s * big1 * big2..(s + 1) * big1 * big2];
        for k2 in 0..lo2 {
            let i2 = (k2 * ds.factor + ds.offsets[1]) as i64;
            for k1 in 0..lo1 {
                let i1 = (k1 * ds.factor + ds.offsets[0]) as i64;
                let mut acc = 0.0;
                for q in 0..side {
                    let c = (i2 + q as i64 + 1 - sh2).rem_euclid(big2 as i64) as usize;
                    for l in 0..side {
                        let r = (i1 + l as i64 + 1 - sh1).rem_euclid(big1 as i64) as usize;
                        acc += k.phi.get(l, q) * src[r + big1 * c];
                    }
                }
                dst[k1 + lo1 * k2] = acc;
            }
        }
    });
    DenseTensor::new(vec![lo1, lo2, bands], out)
}

/// Landsat 7 ETM+ reflective band windows in nm.
pub const LANDSAT7_WINDOWS: [(f64, f64); 6] =
    [(450.0, 520.0), (520.0, 600.0), (630.0, 690.0), (760.0, 900.0), (1550.0, 1750.0), (2080.0, 2350.0)];

/// Centers of the 162 URBAN bands kept after removing water-absorption and
/// noisy bands from the 210-band 400–2500 nm grid.
pub fn urban_band_centers() -> Vec<f64> {
    let dropped = |k: usize| {
        (1..=4).contains(&k)
            || k == 76
            || k == 87
            || (101..=111).contains(&k)
            || (136..=153).contains(&k)
            || (198..=210).contains(&k)
    };
    (1..=210).filter(|&k| !dropped(k)).map(|k| 400.0 + 10.0 * (k as f64 - 1.0)).collect()
}

/// Row `j` averages the bands whose centers fall in window `j`. Windows are
/// `[lo, hi)` except the last, which is closed.
pub fn make_band_average_response(wavelengths: &[f64], windows: &[(f64, f64)]) -> Result<DenseMatrix> {
    if wavelengths.is_empty() || windows.is_empty() {
        return Err(Error::invalid("need at least one band and one window"));
    }
    let mut r = DenseMatrix::zeros(windows.len(), wavelengths.len());
    for (j, &(lo, hi)) in windows.iter().enumerate() {
        if !(lo < hi) {
            return Err(Error::invalid(format!("window {j} has lo {lo} >= hi {hi}")));
        }
        let last = j + 1 == windows.len();
        let inside: Vec<usize> = wavelengths
            .iter()
            .enumerate()
            .filter(|(_, &w)| w >= lo && (w < hi || (last && w == hi)))
            .map(|(i, _)| i)
            .collect();
        if inside.is_empty() {
            return Err(Error::invalid(format!("window [{lo}, {hi}] contains no band center")));
        }
        let w = 1.0 / inside.len() as f64;
        for i in inside {
            r.set(j, i, w);
        }
    }
    Ok(r)
}

/// `Y = Z ×3 R`.
pub fn apply_spectral(z: &DenseTensor, r_spec: &DenseMatrix) -> Result<DenseTensor> {
    mode_product(z, r_spec, 3)
}

/// Optional white Gaussian noise on the observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_hsi: f64,
    pub sigma_msi: f64,
    pub seed: u64,
}

fn add_noise(t: &mut DenseTensor, sigma: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(format!("noise sigma: {e}")))?;
    for v in t.data_mut() {
        *v += normal.sample(rng);
    }
    Ok(())
}

/// Degrades an SRI into an (HSI, MSI) pair. The HSI comes from direct
/// convolution; the returned model holds the Kronecker pairs chosen by
/// `policy`.
pub fn simulate_pair(
    sri: &DenseTensor,
    kernel: &BlurKernel,
    ds: &DownsampleSpec,
    r_spec: &DenseMatrix,
    policy: RankPolicy,
    noise: Option<NoiseSpec>,
) -> Result<(DenseTensor, DenseTensor, DegradationModel)> {
    if sri.order() != 3 {
        return Err(Error::shape("SRI must be 3-order"));
    }
    let (m1, m2) = (sri.dims()[0], sri.dims()[1]);
    let spatial = build_spatial_degradations(kernel, m1, m2, ds, policy)?;
    let mut hsi = apply_spatial_conv(sri, kernel, ds)?;
    let mut msi = apply_spectral(sri, r_spec)?;
    if let Some(n) = noise {
        if n.sigma_hsi < 0.0 || n.sigma_msi < 0.0 {
            return Err(Error::invalid("noise levels must be nonnegative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
        add_noise(&mut hsi, n.sigma_hsi, &mut rng)?;
        add_noise(&mut msi, n.sigma_msi, &mut rng)?;
    }
    Ok((hsi, msi, DegradationModel::new(spatial, r_spec.clone())?))
}
