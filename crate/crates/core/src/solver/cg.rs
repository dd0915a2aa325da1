//! Matrix-free conjugate gradients on matrix-valued unknowns.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: DenseMatrix,
    pub iterations: usize,
    /// `‖A(x) − b‖_F / ‖b‖_F` at exit.
    pub rel_residual: f64,
    pub converged: bool,
}

/// Solves `A(x) = b` for a symmetric positive (semi)definite `A` starting
/// from zero.
pub fn cg_solve(
    apply: impl Fn(&DenseMatrix) -> DenseMatrix,
    rhs: &DenseMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    cg_solve_from(apply, rhs, DenseMatrix::zeros(rhs.rows(), rhs.cols()), tol, max_iter)
}

/// As [`cg_solve`] with an initial guess.
pub fn cg_solve_from(
    apply: impl Fn(&DenseMatrix) -> DenseMatrix,
    rhs: &DenseMatrix,
    x0: DenseMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    if x0.shape() != rhs.shape() {
        return Err(Error::shape("initial guess and right-hand side differ in shape"));
    }
    let bnorm = rhs.frobenius_norm();
    if bnorm == 0.0 {
        return Ok(CgOutcome { x: DenseMatrix::zeros(rhs.rows(), rhs.cols()), iterations: 0, rel_residual: 0.0, converged: true });
    }
    let mut x = x0;
    let mut r = rhs.sub(&apply(&x));
    let mut p = r.clone();
    let mut rs = r.inner(&r);
    let target = tol * bnorm;
    if rs.sqrt() <= target {
        return Ok(CgOutcome { x, iterations: 0, rel_residual: rs.sqrt() / bnorm, converged: true });
    }
    for it in 1..=max_iter {
        let ap = apply(&p);
        let curv = p.inner(&ap);
        if curv <= 0.0 {
            // Direction in the null space: the residual cannot be reduced further.
            return Ok(CgOutcome { x, iterations: it - 1, rel_residual: rs.sqrt() / bnorm, converged: false });
        }
        let alpha = rs / curv;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rs_new = r.inner(&r);
        if !rs_new.is_finite() || !x.is_finite() {
            return Err(Error::Divergence { iteration: it, what: "conjugate gradient iterate".into() });
        }
        if rs_new.sqrt() <= target {
            return Ok(CgOutcome { x, iterations: it, rel_residual: rs_new.sqrt() / bnorm, converged: true });
        }
        let beta = rs_new / rs;
        p = r.add(&p.scale(beta));
        rs = rs_new;
    }
    let rel = rhs.sub(&apply(&x)).frobenius_norm() / bnorm;
    Ok(CgOutcome { x, iterations: max_iter, rel_residual: rel, converged: rel <= tol })
}
