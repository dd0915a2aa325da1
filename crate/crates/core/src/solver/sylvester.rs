//! `min_S ‖H − S ×1 Q1 ×2 Q2 ×3 Q3‖² + τ‖S − K‖²` via eigendecompositions of
//! the Gram matrices `QₙᵀQₙ`.

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::matrix::DenseMatrix;
use crate::tensor::{multi_mode_product, DenseTensor};

/// Precomputed eigensystems for a fixed triple `(Q1, Q2, Q3)`.
#[derive(Debug, Clone)]
pub struct SylvesterOperator {
    q: [DenseMatrix; 3],
    qt: [DenseMatrix; 3],
    v: [DenseMatrix; 3],
    vt: [DenseMatrix; 3],
    lam: [Vec<f64>; 3],
}

impl SylvesterOperator {
    pub fn new(q1: &DenseMatrix, q2: &DenseMatrix, q3: &DenseMatrix) -> Result<Self> {
        let q = [q1.clone(), q2.clone(), q3.clone()];
        let mut v = Vec::with_capacity(3);
        let mut lam = Vec::with_capacity(3);
        for qn in &q {
            let (vals, vecs) = symmetric_eigen(&qn.tdot(qn))?;
            lam.push(vals.into_iter().map(|x| x.max(0.0)).collect::<Vec<_>>());
            v.push(vecs);
        }
        let v: [DenseMatrix; 3] = v.try_into().expect("three modes");
        let qt = [q[0].transpose(), q[1].transpose(), q[2].transpose()];
        let vt = [v[0].transpose(), v[1].transpose(), v[2].transpose()];
        Ok(Self { q, qt, v, vt, lam: lam.try_into().expect("three modes") })
    }

    /// Extents of the unknown `S`.
    pub fn core_dims(&self) -> [usize; 3] {
        [self.q[0].cols(), self.q[1].cols(), self.q[2].cols()]
    }

    /// `S ×1 Q1 ×2 Q2 ×3 Q3`.
    pub fn forward(&self, s: &DenseTensor) -> Result<DenseTensor> {
        multi_mode_product(s, &[&self.q[0], &self.q[1], &self.q[2]])
    }

    pub fn solve(&self, h: &DenseTensor, k: &DenseTensor, tau: f64) -> Result<DenseTensor> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be finite and nonnegative, got {tau}")));
        }
        let dims = self.core_dims();
        if k.dims() != dims {
            return Err(Error::shape(format!("K has extents {:?}, expected {dims:?}", k.dims())));
        }
        let mut t = multi_mode_product(h, &[&self.qt[0], &self.qt[1], &self.qt[2]])?;
        t.axpy(tau, k);
        let mut tp = multi_mode_product(&t, &[&self.vt[0], &self.vt[1], &self.vt[2]])?;
        let [l1, l2, l3] = &self.lam;
        let data = tp.data_mut();
        let mut idx = 0;
        for c in l3 {
            for b in l2 {
                for a in l1 {
                    let den = a * b * c + tau;
                    if den <= 0.0 {
                        return Err(Error::invalid("singular system: zero Gram eigenvalue with tau = 0"));
                    }
                    data[idx] /= den;
                    idx += 1;
                }
            }
        }
        multi_mode_product(&tp, &[&self.v[0], &self.v[1], &self.v[2]])
    }

    /// Half-gradient of the objective at `s`:
    /// `(S ×ₙ QₙᵀQₙ) − H ×ₙ Qₙᵀ + τ(S − K)`.
    pub fn gradient(&self, s: &DenseTensor, h: &DenseTensor, k: &DenseTensor, tau: f64) -> Result<DenseTensor> {
        let fitted = self.forward(s)?;
        let resid = fitted.sub(h);
        let mut g = multi_mode_product(&resid, &[&self.qt[0], &self.qt[1], &self.qt[2]])?;
        g.axpy(tau, &s.sub(k));
        Ok(g)
    }
}

/// One-shot form of [`SylvesterOperator::solve`].
pub fn sylvester_like_solve(
    h: &DenseTensor,
    q1: &DenseMatrix,
    q2: &DenseMatrix,
    q3: &DenseMatrix,
    k: &DenseTensor,
    tau: f64,
) -> Result<DenseTensor> {
    if tau == 0.0 && [q1, q2, q3].iter().any(|q| q.data().iter().all(|&v| v == 0.0)) {
        return Err(Error::invalid("all-zero factor with tau = 0"));
    }
    SylvesterOperator::new(q1, q2, q3)?.solve(h, k, tau)
}
