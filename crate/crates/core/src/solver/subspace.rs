//! Stage one: spatial and spectral subspace identification.
//!
//! The leading `K_i` spatial atoms come straight from the MSI. The remaining
//! `L_i − K_i` atoms are learned from the HSI by sparse dictionary learning
//! (ADMM over `U_i^X`, `B_i`, `A_i`), with `U_i^X` updated by CG.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::cg::cg_solve_from;
use super::config::SolverConfig;
use crate::degradation::SpatialOperator;
use crate::error::{Error, Result};
use crate::linalg::{numeric_rank, svd_truncate, SpdFactor};
use crate::matrix::DenseMatrix;
use crate::sparsity::soft_threshold;
use crate::tensor::{mode_unfold, DenseTensor};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubspaceDiagnostics {
    pub mode: usize,
    pub iterations: usize,
    pub final_rel_change: f64,
    /// `‖X_[i] − D_i B_i‖_F / ‖X_[i]‖_F` at exit.
    pub fit_residual: f64,
    pub cg_unconverged: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SubspaceFactors {
    pub u1: DenseMatrix,
    pub u2: DenseMatrix,
    pub u3: DenseMatrix,
    pub diagnostics: Vec<SubspaceDiagnostics>,
}

fn check_mode_inputs(x: &DenseTensor, y: &DenseTensor, op: &SpatialOperator, mode: usize) -> Result<()> {
    if !(mode == 1 || mode == 2) {
        return Err(Error::invalid(format!("spatial mode must be 1 or 2, got {mode}")));
    }
    op.validate()?;
    if x.order() != 3 || y.order() != 3 {
        return Err(Error::shape("HSI and MSI must be 3-order"));
    }
    let (lo1, lo2) = op.low_dims();
    let (hi1, hi2) = op.high_dims();
    if x.dims()[..2] != [lo1, lo2] || y.dims()[..2] != [hi1, hi2] {
        return Err(Error::shape(format!(
            "HSI {:?} / MSI {:?} inconsistent with operator ({lo1},{lo2}) <- ({hi1},{hi2})",
            x.dims(),
            y.dims()
        )));
    }
    Ok(())
}

/// `U_i = [U_i^Y | U_i^X]` for spatial mode `i ∈ {1, 2}`.
pub fn identify_spatial_subspace(
    x: &DenseTensor,
    y: &DenseTensor,
    op: &SpatialOperator,
    cfg: &SolverConfig,
    mode: usize,
) -> Result<(DenseMatrix, SubspaceDiagnostics)> {
    check_mode_inputs(x, y, op, mode)?;
    let (l, k) = if mode == 1 { (cfg.l1, cfg.k1) } else { (cfg.l2, cfg.k2) };
    let p: &[DenseMatrix] = if mode == 1 { &op.p1 } else { &op.p2 };
    let big = p[0].cols();
    if k == 0 || k > l || l > big {
        return Err(Error::invalid(format!("need 0 < K <= L <= M, got {k}, {l}, {big}")));
    }
    let mut diag = SubspaceDiagnostics { mode, ..Default::default() };

    let y_unf = mode_unfold(y, mode)?;
    if k > y_unf.rows().min(y_unf.cols()) {
        return Err(Error::invalid(format!("K{mode} = {k} exceeds the size of the MSI unfolding")));
    }
    let y_rank = numeric_rank(&y_unf, 1e-10)?;
    if k > y_rank {
        let msg = format!("K{mode} = {k} exceeds numeric rank {y_rank} of the MSI unfolding; trailing atoms are near-null");
        log::warn!("{msg}");
        diag.warnings.push(msg);
    }
    let uy = svd_truncate(&y_unf, k)?.u;
    if l == k {
        diag.converged = true;
        return Ok((uy, diag));
    }

    let lx = l - k;
    let r_count = p.len();
    let x_unf = mode_unfold(x, mode)?;
    let ncols = x_unf.cols();
    let pu_y: Vec<DenseMatrix> = p.iter().map(|pr| pr.dot(&uy)).collect();
    let pt: Vec<DenseMatrix> = p.iter().map(|pr| pr.transpose()).collect();
    let x_norm = x_unf.frobenius_norm().max(f64::MIN_POSITIVE);

    let normal = StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(mode as u64));
    let mut a = DenseMatrix::from_fn(r_count * l, ncols, |_, _| normal.sample(&mut rng));
    let mut b = a.clone();
    let mut ux = DenseMatrix::zeros(big, lx);
    let mut m = DenseMatrix::zeros(r_count * l, ncols);
    let mut rho = cfg.rho0;
    let block_y = |b: &DenseMatrix, r: usize| b.row_block(r * l, r * l + k);
    let block_x = |b: &DenseMatrix, r: usize| b.row_block(r * l + k, (r + 1) * l);

    for it in 1..=cfg.admm_max_iter {
        // Residual after the MSI-derived atoms.
        let mut x_tilde = x_unf.clone();
        for r in 0..r_count {
            x_tilde.axpy(-1.0, &pu_y[r].dot(&block_y(&b, r)));
        }

        // Normal equations for U^X, solved by CG.
        let bx: Vec<DenseMatrix> = (0..r_count).map(|r| block_x(&b, r)).collect();
        let bxt: Vec<DenseMatrix> = bx.iter().map(|m| m.transpose()).collect();
        let mut rhs = DenseMatrix::zeros(big, lx);
        for r in 0..r_count {
            rhs.axpy(1.0, &pt[r].dot(&x_tilde).dot(&bxt[r]));
        }
        let apply = |u: &DenseMatrix| {
            let mut e = DenseMatrix::zeros(x_unf.rows(), ncols);
            for r in 0..r_count {
                e.axpy(1.0, &p[r].dot(u).dot(&bx[r]));
            }
            let mut out = DenseMatrix::zeros(big, lx);
            for r in 0..r_count {
                out.axpy(1.0, &pt[r].dot(&e).dot(&bxt[r]));
            }
            out
        };
        let prev = ux.clone();
        let cg = cg_solve_from(apply, &rhs, ux.clone(), cfg.cg_tol, cfg.cg_max_iter)?;
        if !cg.converged {
            diag.cg_unconverged += 1;
        }
        ux = cg.x;

        // Dictionary D_i = [P^1 U_i, …, P^R U_i] and the regularized B update.
        let u_full = DenseMatrix::hcat(&[&uy, &ux])?;
        let pu: Vec<DenseMatrix> = p.iter().map(|pr| pr.dot(&u_full)).collect();
        let d = DenseMatrix::hcat(&pu.iter().collect::<Vec<_>>())?;
        let mut gram = d.tdot(&d);
        for j in 0..gram.rows() {
            gram.set(j, j, gram.get(j, j) + 0.5 * rho);
        }
        let mut target = d.tdot(&x_unf);
        target.axpy(0.5 * rho, &a);
        target.axpy(0.5, &m);
        b = SpdFactor::new(&gram)?.solve(&target);

        a = soft_threshold(&b.sub(&m.scale(1.0 / rho)), cfg.mu / rho);
        m.axpy(rho, &a.sub(&b));
        let saturated = rho >= cfg.rho_max;
        rho = (cfg.nu * rho).min(cfg.rho_max);

        if !ux.is_finite() || !b.is_finite() {
            return Err(Error::Divergence { iteration: it, what: format!("subspace identification, mode {mode}") });
        }
        diag.iterations = it;
        diag.fit_residual = x_unf.sub(&d.dot(&b)).frobenius_norm() / x_norm;
        let prev_norm = prev.frobenius_norm();
        if prev_norm > 0.0 {
            diag.final_rel_change = ux.sub(&prev).frobenius_norm() / prev_norm;
            if diag.final_rel_change < cfg.eps && saturated {
                diag.converged = true;
                break;
            }
        }
    }
    Ok((DenseMatrix::hcat(&[&uy, &ux])?, diag))
}

/// Leading `C` left singular vectors of the HSI mode-3 unfolding.
pub fn identify_spectral_subspace(x: &DenseTensor, c: usize) -> Result<DenseMatrix> {
    let x3 = mode_unfold(x, 3)?;
    if c == 0 || c > x3.rows().min(x3.cols()) {
        return Err(Error::invalid(format!("C = {c} outside 1..={}", x3.rows().min(x3.cols()))));
    }
    Ok(svd_truncate(&x3, c)?.u)
}

/// Runs both spatial modes and the spectral mode.
pub fn identify_subspaces(
    x: &DenseTensor,
    y: &DenseTensor,
    op: &SpatialOperator,
    cfg: &SolverConfig,
) -> Result<SubspaceFactors> {
    let (u1, d1) = identify_spatial_subspace(x, y, op, cfg, 1)?;
    let (u2, d2) = identify_spatial_subspace(x, y, op, cfg, 2)?;
    let u3 = identify_spectral_subspace(x, cfg.c)?;
    Ok(SubspaceFactors { u1, u2, u3, diagnostics: vec![d1, d2] })
}
