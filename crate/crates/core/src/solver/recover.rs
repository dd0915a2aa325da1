//! Checkable rank conditions for exact recovery.

use serde::{Deserialize, Serialize};

use crate::degradation::SpatialOperator;
use crate::error::{Error, Result};
use crate::linalg::numeric_rank;
use crate::matrix::DenseMatrix;
use crate::tensor::{mode_unfold, DenseTensor, TuckerFactors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCondition {
    pub pass: bool,
    pub rank: usize,
    pub required: usize,
    /// Failure forced by dimensions (`L_i·kr > m_i`), independent of data.
    pub structural: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverabilityReport {
    pub kr: usize,
    pub l1_le_l2c: bool,
    pub l2_le_l1c: bool,
    pub s_ge_3: bool,
    pub concat_mode1: RankCondition,
    pub concat_mode2: RankCondition,
    pub msi_rank_mode1: RankCondition,
    pub msi_rank_mode2: RankCondition,
    /// Every condition for exact recovery of the generalized model.
    pub recoverable: bool,
    /// The first five conditions, under which a separable model fails when
    /// `kr > 1`.
    pub separable_conditions_hold: bool,
    /// `kr > 1`: no single Kronecker pair represents the degradation.
    pub tf_model_inexact: bool,
    /// `separable_conditions_hold && kr > 1`.
    pub tf_fails_with_probability_one: bool,
}

fn concat_condition(p: &[DenseMatrix], u: &DenseMatrix, tol: f64) -> Result<RankCondition> {
    let blocks: Vec<DenseMatrix> = p.iter().map(|pr| pr.dot(u)).collect();
    let cat = DenseMatrix::hcat(&blocks.iter().collect::<Vec<_>>())?;
    let required = u.cols() * p.len();
    let rank = numeric_rank(&cat, tol)?;
    Ok(RankCondition { pass: rank == required, rank, required, structural: required > cat.rows() })
}

fn msi_condition(y: &DenseTensor, mode: usize, l: usize, tol: f64) -> Result<RankCondition> {
    let unf = mode_unfold(y, mode)?;
    let rank = numeric_rank(&unf, tol)?;
    Ok(RankCondition { pass: rank == l, rank, required: l, structural: l > unf.rows().min(unf.cols()) })
}

pub fn check_recoverability(
    factors: &TuckerFactors,
    op: &SpatialOperator,
    y: &DenseTensor,
    tol: f64,
) -> Result<RecoverabilityReport> {
    factors.validate()?;
    op.validate()?;
    let [l1, l2, c] = <[usize; 3]>::try_from(factors.core.dims()).map_err(|_| Error::shape("core must be 3-order"))?;
    let s = factors.u3.rows();
    if op.high_dims() != (factors.u1.rows(), factors.u2.rows()) {
        return Err(Error::shape("degradation operator and spatial factors disagree"));
    }
    if y.order() != 3 || y.dims()[..2] != [factors.u1.rows(), factors.u2.rows()] {
        return Err(Error::shape(format!("MSI {:?} inconsistent with spatial factors", y.dims())));
    }
    let kr = op.kr();
    let l1_le_l2c = l1 <= l2 * c;
    let l2_le_l1c = l2 <= l1 * c;
    let s_ge_3 = s >= 3;
    let concat_mode1 = concat_condition(&op.p1, &factors.u1, tol)?;
    let concat_mode2 = concat_condition(&op.p2, &factors.u2, tol)?;
    let msi_rank_mode1 = msi_condition(y, 1, l1, tol)?;
    let msi_rank_mode2 = msi_condition(y, 2, l2, tol)?;
    let separable_conditions_hold = l1_le_l2c && l2_le_l1c && s_ge_3 && concat_mode1.pass && concat_mode2.pass;
    let recoverable = separable_conditions_hold && msi_rank_mode1.pass && msi_rank_mode2.pass;
    Ok(RecoverabilityReport {
        kr,
        l1_le_l2c,
        l2_le_l1c,
        s_ge_3,
        concat_mode1,
        concat_mode2,
        msi_rank_mode1,
        msi_rank_mode2,
        recoverable,
        separable_conditions_hold,
        tf_model_inexact: kr > 1,
        tf_fails_with_probability_one: separable_conditions_hold && kr > 1,
    })
}
