//! Two-stage fusion: subspace identification followed by block-group-sparse
//! coding of the core.

mod cg;
mod coding;
mod config;
mod recover;
mod subspace;
mod sylvester;

pub use cg::{cg_solve, cg_solve_from, CgOutcome};
pub use coding::{bgs_coding, resolve_gamma, CodingFailure, CodingOutcome, IterationRecord};
pub use config::{GammaSpec, SolverConfig};
pub use recover::{check_recoverability, RankCondition, RecoverabilityReport};
pub use subspace::{
    identify_spatial_subspace, identify_spectral_subspace, identify_subspaces, SubspaceDiagnostics, SubspaceFactors,
};
pub use sylvester::{sylvester_like_solve, SylvesterOperator};

use serde::{Deserialize, Serialize};

use crate::degradation::DegradationModel;
use crate::error::Error;
use crate::tensor::{tucker_reconstruct, DenseTensor, TuckerFactors};

/// Everything recorded during a run, serializable next to its outputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunHistory {
    pub config: Option<SolverConfig>,
    pub kr_used: usize,
    pub gamma: Option<f64>,
    pub subspace: Vec<SubspaceDiagnostics>,
    pub coding: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct FusionResult {
    pub sri_estimate: DenseTensor,
    pub factors: TuckerFactors,
    pub history: RunHistory,
    /// Both the subspace stage and the coding stage met their tolerance.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Subspace,
    Coding,
    Reconstruct,
}

#[derive(Debug, thiserror::Error)]
#[error("{stage:?} stage failed: {error}")]
pub struct FusionFailure {
    pub stage: Stage,
    #[source]
    pub error: Error,
    pub history: RunHistory,
}

/// Estimates the SRI from an HSI `x` and MSI `y`.
pub fn fuse(
    x: &DenseTensor,
    y: &DenseTensor,
    model: &DegradationModel,
    cfg: &SolverConfig,
) -> Result<FusionResult, FusionFailure> {
    let mut history = RunHistory { config: Some(cfg.clone()), ..Default::default() };
    let fail = |stage, error, history: &RunHistory| FusionFailure { stage, error, history: history.clone() };

    let model = match cfg.kr_truncate {
        Some(n) => model.truncated(n).map_err(|e| fail(Stage::Setup, e, &history))?,
        None => model.clone(),
    };
    history.kr_used = model.kr();
    if y.order() != 3 || x.order() != 3 {
        return Err(fail(Stage::Setup, Error::Shape("HSI and MSI must be 3-order".into()), &history));
    }
    let (m1, m2) = (y.dims()[0], y.dims()[1]);
    let s = x.dims()[2];
    if model.r_spec.shape() != (y.dims()[2], s) {
        return Err(fail(
            Stage::Setup,
            Error::Shape(format!("spectral response {:?} vs bands ({}, {s})", model.r_spec.shape(), y.dims()[2])),
            &history,
        ));
    }
    cfg.validate(m1, m2, s).map_err(|e| fail(Stage::Setup, e, &history))?;

    let sub = identify_subspaces(x, y, &model.spatial, cfg).map_err(|e| fail(Stage::Subspace, e, &history))?;
    history.subspace = sub.diagnostics.clone();
    let sub_converged = sub.diagnostics.iter().all(|d| d.converged);

    let coded = bgs_coding(x, y, &model.spatial, &model.r_spec, &sub.u1, &sub.u2, &sub.u3, cfg).map_err(|f| {
        history.coding = f.records;
        fail(Stage::Coding, f.error, &history)
    })?;
    history.coding = coded.records;
    history.gamma = Some(coded.gamma);

    let factors =
        TuckerFactors::new(coded.core, sub.u1, sub.u2, sub.u3).map_err(|e| fail(Stage::Reconstruct, e, &history))?;
    let sri_estimate = tucker_reconstruct(&factors).map_err(|e| fail(Stage::Reconstruct, e, &history))?;
    Ok(FusionResult { sri_estimate, factors, history, converged: sub_converged && coded.converged })
}
