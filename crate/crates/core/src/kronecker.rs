//! Kronecker products, the Kronecker/outer-product rearrangement, and
//! nearest-Kronecker-sum decompositions.
//!
//! A matrix `W ∈ ℝ^{J1J2 × K1K2}` viewed as a `J1 × K1` grid of `J2 × K2`
//! blocks is rearranged into `ℝ^{J1K1 × J2K2}` so that `M1 ⊗ M2` becomes the
//! rank-one matrix `vec(M1) vec(M2)ᵀ`. The Kronecker rank of `W` is the rank
//! of the rearrangement, and truncated SVD of the rearrangement gives optimal
//! Kronecker-sum approximations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{rank_from_spectrum, singular_values, svd_truncate};
use crate::matrix::{unvec, DenseMatrix};

pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const DEFAULT_ENERGY: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KronShape {
    pub j1: usize,
    pub j2: usize,
    pub k1: usize,
    pub k2: usize,
}

impl KronShape {
    pub fn new(j1: usize, j2: usize, k1: usize, k2: usize) -> Result<Self> {
        if [j1, j2, k1, k2].contains(&0) {
            return Err(Error::invalid("Kronecker shape extents must be positive"));
        }
        Ok(Self { j1, j2, k1, k2 })
    }

    fn check_full(&self, w: &DenseMatrix) -> Result<()> {
        if w.shape() != (self.j1 * self.j2, self.k1 * self.k2) {
            return Err(Error::shape(format!(
                "matrix is {}x{}, shape {:?} expects {}x{}",
                w.rows(),
                w.cols(),
                self,
                self.j1 * self.j2,
                self.k1 * self.k2
            )));
        }
        Ok(())
    }

    fn check_rearranged(&self, m: &DenseMatrix) -> Result<()> {
        if m.shape() != (self.j1 * self.k1, self.j2 * self.k2) {
            return Err(Error::shape(format!(
                "rearranged matrix is {}x{}, shape {:?} expects {}x{}",
                m.rows(),
                m.cols(),
                self,
                self.j1 * self.k1,
                self.j2 * self.k2
            )));
        }
        Ok(())
    }
}

/// Standard Kronecker product.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (br, bc) = b.shape();
    DenseMatrix::from_fn(a.rows() * br, a.cols() * bc, |i, j| a.get(i / br, j / bc) * b.get(i % br, j % bc))
}

/// Maps `M1 ⊗ M2` to `vec(M1) vec(M2)ᵀ`. Pure index permutation.
pub fn rearrange(w: &DenseMatrix, s: KronShape) -> Result<DenseMatrix> {
    s.check_full(w)?;
    let KronShape { j1, j2, k1, k2 } = s;
    let mut out = DenseMatrix::zeros(j1 * k1, j2 * k2);
    for c1 in 0..k1 {
        for c2 in 0..k2 {
            for r1 in 0..j1 {
                for r2 in 0..j2 {
                    out.set(r1 + j1 * c1, r2 + j2 * c2, w.get(r1 * j2 + r2, c1 * k2 + c2));
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`rearrange`].
pub fn rearrange_inverse(m: &DenseMatrix, s: KronShape) -> Result<DenseMatrix> {
    s.check_rearranged(m)?;
    let KronShape { j1, j2, k1, k2 } = s;
    let mut out = DenseMatrix::zeros(j1 * j2, k1 * k2);
    for c1 in 0..k1 {
        for c2 in 0..k2 {
            for r1 in 0..j1 {
                for r2 in 0..j2 {
                    out.set(r1 * j2 + r2, c1 * k2 + c2, m.get(r1 + j1 * c1, r2 + j2 * c2));
                }
            }
        }
    }
    Ok(out)
}

/// Numerical Kronecker rank: singular values of the rearrangement above
/// `rel_tol · σ_max`.
pub fn kron_rank(w: &DenseMatrix, s: KronShape, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::invalid(format!("rel_tol must lie in (0,1), got {rel_tol}")));
    }
    Ok(rank_from_spectrum(&singular_values(&rearrange(w, s)?)?, rel_tol))
}

/// How many Kronecker terms to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum RankPolicy {
    /// Exactly this many terms.
    Exact { rank: usize },
    /// Fewest terms whose squared singular values reach `eta` of the total.
    Energy { eta: f64 },
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Energy { eta: DEFAULT_ENERGY }
    }
}

impl RankPolicy {
    /// Resolves the policy against a descending spectrum.
    pub fn select(&self, spectrum: &[f64]) -> Result<usize> {
        match *self {
            RankPolicy::Exact { rank } => {
                if rank == 0 || rank > spectrum.len() {
                    return Err(Error::invalid(format!(
                        "exact rank {rank} outside 1..={}",
                        spectrum.len()
                    )));
                }
                Ok(rank)
            }
            RankPolicy::Energy { eta } => {
                if !(eta > 0.0 && eta <= 1.0) {
                    return Err(Error::invalid(format!("energy fraction must lie in (0,1], got {eta}")));
                }
                let total: f64 = spectrum.iter().map(|s| s * s).sum();
                if total == 0.0 {
                    return Ok(1);
                }
                let mut acc = 0.0;
                for (k, s) in spectrum.iter().enumerate() {
                    acc += s * s;
                    if acc >= eta * total {
                        return Ok(k + 1);
                    }
                }
                Ok(spectrum.len())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct KroneckerDecomposition {
    pub shape: KronShape,
    pub left: Vec<DenseMatrix>,
    pub right: Vec<DenseMatrix>,
    /// Singular values of the rearrangement (all of them, descending).
    pub spectrum: Vec<f64>,
    pub residual_fro: f64,
}

impl KroneckerDecomposition {
    pub fn rank(&self) -> usize {
        self.left.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let KronShape { j1, j2, k1, k2 } = self.shape;
        let mut acc = DenseMatrix::zeros(j1 * j2, k1 * k2);
        for (l, r) in self.left.iter().zip(&self.right) {
            acc.axpy(1.0, &kron(l, r));
        }
        acc
    }
}

/// `W ≈ Σ_r left_r ⊗ right_r` from the truncated SVD of the rearrangement,
/// splitting `√σ_r` across both sides.
pub fn kron_decompose(w: &DenseMatrix, s: KronShape, policy: RankPolicy) -> Result<KroneckerDecomposition> {
    let re = rearrange(w, s)?;
    let spectrum = singular_values(&re)?;
    let rank = policy.select(&spectrum)?;
    let svd = svd_truncate(&re, rank)?;
    let mut left = Vec::with_capacity(rank);
    let mut right = Vec::with_capacity(rank);
    for r in 0..rank {
        let root = svd.s[r].sqrt();
        let a: Vec<f64> = svd.u.column(r).iter().map(|v| v * root).collect();
        let b: Vec<f64> = svd.v.column(r).iter().map(|v| v * root).collect();
        left.push(unvec(&a, s.j1, s.k1)?);
        right.push(unvec(&b, s.j2, s.k2)?);
    }
    let mut kd = KroneckerDecomposition { shape: s, left, right, spectrum, residual_fro: 0.0 };
    kd.residual_fro = w.sub(&kd.reconstruct()).frobenius_norm();
    Ok(kd)
}
