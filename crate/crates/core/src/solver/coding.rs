//! Stage two: block-group-sparse coding of the core tensor.
//!
//! ADMM over per-pair copies `G_r`, the shared core `G` and its B-unfolded
//! sparse copy `Ĝ`, with all tensors and multipliers starting at zero. The
//! Gram eigensystems are fixed because the factors are, so they are
//! computed once up front.

use serde::{Deserialize, Serialize};

use super::config::{GammaSpec, SolverConfig};
use super::sylvester::SylvesterOperator;
use crate::degradation::SpatialOperator;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sparsity::{b_fold, b_unfold, l2gamma, prox_l2gamma_with_stats, BlockShape};
use crate::tensor::DenseTensor;

/// Relative weight of the ridge term in the initial core fit used to
/// resolve a relative `γ`.
const INITIAL_FIT_TAU: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub rho: f64,
    /// `‖X − Σ_r G_r ×(P1U1, P2U2, U3)‖ / ‖X‖`
    pub x_residual: f64,
    /// `‖Y − G ×(U1, U2, RU3)‖ / ‖Y‖`
    pub y_residual: f64,
    /// Splitting gap `√(‖Ĝ − G_[t]‖² + Σ_r ‖G − G_r‖²) / ‖G‖`.
    pub consensus: f64,
    pub combined: f64,
    /// `‖Ĝ‖_{2,γ}`
    pub objective: f64,
    pub rel_change: f64,
    pub prox_unconverged: usize,
}

#[derive(Debug, Clone)]
pub struct CodingOutcome {
    pub core: DenseTensor,
    pub gamma: f64,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

/// Failure that still carries the iterations completed so far.
#[derive(Debug)]
pub struct CodingFailure {
    pub error: Error,
    pub records: Vec<IterationRecord>,
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Resolves `γ` for a given data set; a relative spec falls back to 1 when
/// the initial estimate has zero median column norm.
pub fn resolve_gamma(spec: GammaSpec, y_op: &SylvesterOperator, y: &DenseTensor, bs: &BlockShape) -> Result<f64> {
    match spec {
        GammaSpec::Absolute(g) => Ok(g),
        GammaSpec::RelativeToMedian(frac) => {
            let dims = y_op.core_dims();
            let g0 = y_op.solve(y, &DenseTensor::zeros(&dims), INITIAL_FIT_TAU)?;
            let m = b_unfold(&g0, bs)?;
            let norms = (0..m.cols()).map(|j| m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            let med = median(norms);
            Ok(if med > 0.0 { frac * med } else { 1.0 })
        }
    }
}

/// Estimates the core `G` given fixed factors.
#[allow(clippy::too_many_arguments)]
pub fn bgs_coding(
    x: &DenseTensor,
    y: &DenseTensor,
    op: &SpatialOperator,
    r_spec: &DenseMatrix,
    u1: &DenseMatrix,
    u2: &DenseMatrix,
    u3: &DenseMatrix,
    cfg: &SolverConfig,
) -> std::result::Result<CodingOutcome, CodingFailure> {
    let fail = |error: Error, records: Vec<IterationRecord>| CodingFailure { error, records };
    op.validate().map_err(|e| fail(e, vec![]))?;
    let dims = [u1.cols(), u2.cols(), u3.cols()];
    let bs = BlockShape::new(cfg.block.to_vec()).map_err(|e| fail(e, vec![]))?;
    bs.counts(&dims).map_err(|e| fail(e, vec![]))?;
    if r_spec.cols() != u3.rows() {
        return Err(fail(Error::shape("spectral response and U3 disagree on band count"), vec![]));
    }
    let kr = op.kr();

    let setup = || -> Result<(Vec<SylvesterOperator>, SylvesterOperator)> {
        let mut pair_ops = Vec::with_capacity(kr);
        for (p1, p2) in op.p1.iter().zip(&op.p2) {
            pair_ops.push(SylvesterOperator::new(&p1.dot(u1), &p2.dot(u2), u3)?);
        }
        let y_op = SylvesterOperator::new(u1, u2, &r_spec.dot(u3))?;
        // Shape checks on the observations.
        let xd = pair_ops[0].forward(&DenseTensor::zeros(&dims))?;
        if xd.dims() != x.dims() {
            return Err(Error::shape(format!("HSI {:?} vs model output {:?}", x.dims(), xd.dims())));
        }
        let yd = y_op.forward(&DenseTensor::zeros(&dims))?;
        if yd.dims() != y.dims() {
            return Err(Error::shape(format!("MSI {:?} vs model output {:?}", y.dims(), yd.dims())));
        }
        Ok((pair_ops, y_op))
    };
    let (pair_ops, y_op) = setup().map_err(|e| fail(e, vec![]))?;
    let gamma = resolve_gamma(cfg.gamma, &y_op, y, &bs).map_err(|e| fail(e, vec![]))?;

    let zero_core = DenseTensor::zeros(&dims);
    let mut g = zero_core.clone();
    let mut g_r = vec![zero_core.clone(); kr];
    let mut p_r = vec![zero_core.clone(); kr];
    let mut fwd: Vec<DenseTensor> = vec![DenseTensor::zeros(x.dims()); kr];
    let mut p_x = DenseTensor::zeros(x.dims());
    let mut p_y = DenseTensor::zeros(y.dims());
    let mut w = b_unfold(&zero_core, &bs).map_err(|e| fail(e, vec![]))?;
    let mut rho = cfg.rho0;
    let (x_norm, y_norm) = (x.frobenius_norm(), y.frobenius_norm());
    let mut records = Vec::new();
    let mut converged = false;

    for it in 1..=cfg.admm_max_iter {
        let step = (|| -> Result<IterationRecord> {
            let prev = g.clone();
            let mut total = fwd.iter().fold(DenseTensor::zeros(x.dims()), |mut acc, f| {
                acc.axpy(1.0, f);
                acc
            });
            for r in 0..kr {
                let mut h = x.add(&p_x.scale(1.0 / rho));
                h.axpy(-1.0, &total);
                h.axpy(1.0, &fwd[r]);
                let mut k = g.clone();
                k.axpy(1.0 / rho, &p_r[r]);
                g_r[r] = pair_ops[r].solve(&h, &k, 1.0)?;
                let new_fwd = pair_ops[r].forward(&g_r[r])?;
                total.axpy(-1.0, &fwd[r]);
                total.axpy(1.0, &new_fwd);
                fwd[r] = new_fwd;
            }

            let mut target = b_unfold(&g, &bs)?;
            target.axpy(-1.0 / rho, &w);
            let (g_hat, prox_stats) =
                prox_l2gamma_with_stats(&target, rho, gamma, cfg.prox_tol, cfg.prox_max_iter)?;

            let mut gw = g_hat.clone();
            gw.axpy(1.0 / rho, &w);
            let mut k = b_fold(&gw, &bs, &dims)?;
            for r in 0..kr {
                k.axpy(1.0, &g_r[r]);
                k.axpy(-1.0 / rho, &p_r[r]);
            }
            let tau = (kr + 1) as f64;
            let k = k.scale(1.0 / tau);
            let mut h = y.clone();
            h.axpy(1.0 / rho, &p_y);
            g = y_op.solve(&h, &k, tau)?;

            let x_res = x.sub(&total);
            let y_res = y.sub(&y_op.forward(&g)?);
            let g_unf = b_unfold(&g, &bs)?;
            let hat_gap = g_hat.sub(&g_unf);
            p_x.axpy(rho, &x_res);
            p_y.axpy(rho, &y_res);
            w.axpy(rho, &hat_gap);
            let mut cons_sq = hat_gap.frobenius_norm().powi(2);
            for r in 0..kr {
                let d = g.sub(&g_r[r]);
                cons_sq += d.frobenius_norm().powi(2);
                p_r[r].axpy(rho, &d);
            }

            if !g.is_finite() || !p_x.is_finite() || !p_y.is_finite() {
                return Err(Error::Divergence { iteration: it, what: "core coding iterate".into() });
            }
            let g_norm = g.frobenius_norm();
            let prev_norm = prev.frobenius_norm();
            let rel_change = if prev_norm > 0.0 { g.sub(&prev).frobenius_norm() / prev_norm } else { f64::INFINITY };
            let x_residual = rel(x_res.frobenius_norm(), x_norm);
            let y_residual = rel(y_res.frobenius_norm(), y_norm);
            let consensus = rel(cons_sq.sqrt(), g_norm);
            let record = IterationRecord {
                iteration: it,
                rho,
                x_residual,
                y_residual,
                consensus,
                combined: x_residual + y_residual + consensus,
                objective: l2gamma(&g_hat, gamma)?,
                rel_change,
                prox_unconverged: prox_stats.unconverged,
            };
            rho = (cfg.nu * rho).min(cfg.rho_max);
            Ok(record)
        })();
        let record = step.map_err(|e| fail(e, std::mem::take(&mut records)))?;
        // While ρ still grows the scaled multipliers shrink by ν each step,
        // so a stalled iterate is not yet feasible.
        let done = record.rel_change < cfg.eps && record.rho >= cfg.rho_max;
        // All-zero data leaves G at its zero fixed point.
        let stalled = record.rel_change.is_infinite() && g.frobenius_norm() == 0.0;
        records.push(record);
        if done || stalled {
            converged = true;
            break;
        }
    }
    Ok(CodingOutcome { core: g, gamma, records, converged })
}
