use gtf_hsr::linalg::svd_truncate;
use gtf_hsr::solver::{check_recoverability, RecoverabilityReport};
use gtf_hsr::tensor::{mode_unfold, multi_mode_product};
use gtf_hsr::{DenseTensor, TuckerFactors};

use super::simulate::simulate;
use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// Truncated HOSVD with ranks `(L1, L2, C)`.
pub fn hosvd(z: &DenseTensor, ranks: [usize; 3]) -> CliResult<TuckerFactors> {
    let mut u = Vec::with_capacity(3);
    for (n, &r) in ranks.iter().enumerate() {
        u.push(svd_truncate(&mode_unfold(z, n + 1)?, r)?.u);
    }
    let ut: Vec<_> = u.iter().map(|m| m.transpose()).collect();
    let core = multi_mode_product(z, &[&ut[0], &ut[1], &ut[2]])?;
    let [u1, u2, u3] = <[_; 3]>::try_from(u).expect("three factors");
    Ok(TuckerFactors::new(core, u1, u2, u3)?)
}

/// Simulates the configured experiment and checks the rank conditions
/// against the known factors (synthetic scenes) or a truncated HOSVD with
/// the solver ranks (file scenes).
pub fn recoverability(cfg: &ExperimentConfig, tol: f64) -> CliResult<RecoverabilityReport> {
    let sim = simulate(cfg)?;
    let factors = match sim.truth {
        Some(f) => f,
        None => hosvd(&sim.sri, [cfg.solver.l1, cfg.solver.l2, cfg.solver.c])?,
    };
    Ok(check_recoverability(&factors, &sim.model.spatial, &sim.msi, tol)?)
}
