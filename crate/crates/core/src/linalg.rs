//! Dense factorizations with reproducible conventions.
//!
//! The decompositions themselves come from `faer` (sequential, so results
//! are reproducible); this module fixes ordering (descending) and signs.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Truncated singular value decomposition `m ≈ U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

/// Flips `(u_j, v_j)` pairs so the largest-magnitude entry of each left
/// vector is nonnegative (lowest index wins ties).
fn canonical_signs(u: &mut DenseMatrix, mut v: Option<&mut DenseMatrix>) {
    for j in 0..u.cols() {
        let col = u.column(j);
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            let rows = u.rows();
            for x in &mut u.data_mut()[j * rows..(j + 1) * rows] {
                *x = -*x;
            }
            if let Some(v) = v.as_deref_mut() {
                let vr = v.rows();
                for x in &mut v.data_mut()[j * vr..(j + 1) * vr] {
                    *x = -*x;
                }
            }
        }
    }
}

fn to_faer(m: &DenseMatrix) -> Mat<f64> {
    Mat::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

fn from_faer(m: &Mat<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn full_svd(m: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let svd = to_faer(m).thin_svd().map_err(|_| Error::SvdNoConvergence)?;
    let sv = svd.S().column_vector();
    let p = sv.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let s: Vec<f64> = order.iter().map(|&k| sv[k].max(0.0)).collect();
    let (u, v) = (svd.U(), svd.V());
    let uu = DenseMatrix::from_fn(m.rows(), p, |i, j| u[(i, order[j])]);
    let vv = DenseMatrix::from_fn(m.cols(), p, |i, j| v[(i, order[j])]);
    Ok((uu, s, vv))
}

/// Leading `k` singular triplets, singular values descending, signs fixed by
/// the largest-entry convention on `U`.
pub fn svd_truncate(m: &DenseMatrix, k: usize) -> Result<Svd> {
    let p = m.rows().min(m.cols());
    if k == 0 || k > p {
        return Err(Error::invalid(format!(
            "rank {k} out of range 1..={p} for a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let (u, s, v) = full_svd(m)?;
    let mut u = u.col_block(0, k);
    let mut v = v.col_block(0, k);
    canonical_signs(&mut u, Some(&mut v));
    Ok(Svd { u, s: s[..k].to_vec(), v })
}

/// All singular values, descending.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    let sv = to_faer(m).singular_values().map_err(|_| Error::SvdNoConvergence)?;
    let mut s: Vec<f64> = sv.iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Number of singular values above `rel_tol · σ_max`; zero for the zero
/// matrix.
pub fn numeric_rank(m: &DenseMatrix, rel_tol: f64) -> Result<usize> {
    Ok(rank_from_spectrum(&singular_values(m)?, rel_tol))
}

pub fn rank_from_spectrum(s: &[f64], rel_tol: f64) -> usize {
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Eigen-decomposition of a symmetric matrix; eigenvalues descending, each
/// eigenvector sign-normalized like [`svd_truncate`].
pub fn symmetric_eigen(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if m.rows() != m.cols() {
        return Err(Error::shape("symmetric_eigen needs a square matrix"));
    }
    let eig = to_faer(m).self_adjoint_eigen(Side::Lower).map_err(|_| Error::SvdNoConvergence)?;
    let (lam, vecs) = (eig.S().column_vector(), eig.U());
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lam[b].total_cmp(&lam[a]));
    let values = order.iter().map(|&k| lam[k]).collect();
    let mut vectors = DenseMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    canonical_signs(&mut vectors, None);
    Ok((values, vectors))
}

/// Cholesky factor of a symmetric positive-definite matrix, reusable for
/// many right-hand sides.
pub struct SpdFactor {
    chol: Llt<f64>,
    n: usize,
}

impl SpdFactor {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::shape("Cholesky needs a square matrix"));
        }
        let chol = to_faer(a)
            .llt(Side::Lower)
            .map_err(|_| Error::invalid("matrix is not numerically positive definite"))?;
        Ok(Self { chol, n: a.rows() })
    }

    pub fn solve(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(b.rows(), self.n, "SpdFactor::solve: rhs rows");
        from_faer(&self.chol.solve(to_faer(b)))
    }
}

/// Orthonormal basis for the column span of a tall matrix (thin QR).
pub fn orthonormalize(m: &DenseMatrix) -> DenseMatrix {
    let mut q = from_faer(&to_faer(m).qr().compute_thin_Q());
    canonical_signs(&mut q, None);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormal_cols(m: &DenseMatrix, tol: f64) -> bool {
        let g = m.tdot(m);
        g.max_abs_diff(&DenseMatrix::identity(m.cols())) < tol
    }

    #[test]
    fn identity_svd() {
        let svd = svd_truncate(&DenseMatrix::identity(4), 4).unwrap();
        assert!(svd.s.iter().all(|&s| (s - 1.0).abs() < 1e-15));
        // Each column of U has exactly one nonzero (unit) entry under the
        // sign convention it must be +1.
        for j in 0..4 {
            let col = svd.u.column(j);
            let big = col.iter().cloned().fold(f64::MIN, f64::max);
            assert!((big - 1.0).abs() < 1e-15);
        }
        assert!(svd.u.dot(&svd.v.transpose()).max_abs_diff(&DenseMatrix::identity(4)) < 1e-14);
    }

    #[test]
    fn rank_one_singular_value() {
        let a = [1.0, 2.0, -2.0];
        let b = [3.0, 4.0];
        let m = DenseMatrix::from_fn(3, 2, |i, j| a[i] * b[j]);
        let svd = svd_truncate(&m, 1).unwrap();
        assert!((svd.s[0] - 15.0).abs() < 1e-12);
    }

    #[test]
    fn diag_truncation_and_signs() {
        let m = DenseMatrix::diag(&[1.0, -3.0, 2.0]);
        let svd = svd_truncate(&m, 2).unwrap();
        assert!((svd.s[0] - 3.0).abs() < 1e-14 && (svd.s[1] - 2.0).abs() < 1e-14);
        assert!(orthonormal_cols(&svd.u, 1e-14) && orthonormal_cols(&svd.v, 1e-14));
        for j in 0..2 {
            let col = svd.u.column(j);
            let (mut best, mut at) = (0.0f64, 0);
            for (i, x) in col.iter().enumerate() {
                if x.abs() > best.abs() {
                    best = *x;
                    at = i;
                }
            }
            assert!(best > 0.0, "column {j} largest entry at {at} is negative");
        }
    }

    #[test]
    fn svd_rank_bounds() {
        let m = DenseMatrix::identity(3);
        assert!(svd_truncate(&m, 0).is_err());
        assert!(svd_truncate(&m, 4).is_err());
    }

    #[test]
    fn numeric_rank_cases() {
        assert_eq!(numeric_rank(&DenseMatrix::zeros(3, 4), 1e-8).unwrap(), 0);
        assert_eq!(numeric_rank(&DenseMatrix::identity(5), 1e-8).unwrap(), 5);
        let m = DenseMatrix::from_fn(4, 4, |i, j| (i + 1) as f64 * (j + 2) as f64);
        assert_eq!(numeric_rank(&m, 1e-8).unwrap(), 1);
    }

    #[test]
    fn eigen_reconstructs() {
        let b = DenseMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).cos());
        let a = b.tdot(&b);
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = vecs.dot(&DenseMatrix::diag(&vals)).dot(&vecs.transpose());
        assert!(rebuilt.max_abs_diff(&a) < 1e-12);
        assert!(orthonormal_cols(&vecs, 1e-12));
    }

    #[test]
    fn spd_solve_roundtrip() {
        let b = DenseMatrix::from_fn(4, 4, |i, j| if i == j { 3.0 } else { 0.5 });
        let x = DenseMatrix::from_fn(4, 2, |i, j| i as f64 - j as f64);
        let rhs = b.dot(&x);
        let f = SpdFactor::new(&b).unwrap();
        assert!(f.solve(&rhs).max_abs_diff(&x) < 1e-12);
        assert!(SpdFactor::new(&DenseMatrix::diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn rank_deficient_small_svd_reconstructs() {
        // Separable 3×3 Gaussian: exactly rank one.
        let g = [(-1.0f64 / 1.28).exp(), 1.0, (-1.0f64 / 1.28).exp()];
        let m = DenseMatrix::from_fn(3, 3, |i, j| g[i] * g[j]);
        let svd = svd_truncate(&m, 3).unwrap();
        let rec = svd.u.dot(&DenseMatrix::diag(&svd.s)).dot(&svd.v.transpose());
        assert!(rec.max_abs_diff(&m) < 1e-15);
        let norm2: f64 = g.iter().map(|x| x * x).sum();
        assert!((svd.s[0] - norm2).abs() < 1e-15);
        assert!((svd.u.get(0, 0) - svd.u.get(2, 0)).abs() < 1e-15);
    }

}
