use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the ℓ2,γ surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum GammaSpec {
    Absolute(f64),
    /// Fraction of the median column norm of the B-unfolded initial core
    /// estimate.
    RelativeToMedian(f64),
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec::RelativeToMedian(0.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub l1: usize,
    pub l2: usize,
    pub c: usize,
    pub k1: usize,
    pub k2: usize,
    /// Block extents `[t1, t2, t3]` of the core B-unfolding.
    pub block: [usize; 3],
    pub gamma: GammaSpec,
    pub mu: f64,
    pub rho0: f64,
    pub rho_max: f64,
    pub nu: f64,
    pub eps: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub admm_max_iter: usize,
    pub prox_tol: f64,
    pub prox_max_iter: usize,
    pub seed: u64,
    /// Keep only this many Kronecker pairs (emulates a separable model).
    pub kr_truncate: Option<usize>,
    /// Listed among the coding-stage inputs but used by no update; kept
    /// for configuration compatibility.
    pub lambda: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            l1: 256,
            l2: 256,
            c: 12,
            k1: 240,
            k2: 240,
            block: [16, 16, 3],
            gamma: GammaSpec::default(),
            mu: 1e-3,
            rho0: 1e-3,
            rho_max: 1e3,
            nu: 1.05,
            eps: 1e-4,
            cg_tol: 1e-8,
            cg_max_iter: 200,
            admm_max_iter: 500,
            prox_tol: 1e-10,
            prox_max_iter: 100,
            seed: 0,
            kr_truncate: None,
            lambda: None,
        }
    }
}

impl SolverConfig {
    /// Checks internal consistency and compatibility with an SRI of extents
    /// `(M1, M2, S)`.
    pub fn validate(&self, m1: usize, m2: usize, s: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        for (name, k, l, m) in [("1", self.k1, self.l1, m1), ("2", self.k2, self.l2, m2)] {
            if k == 0 || k > l || l > m {
                return bad(format!("need 0 < K{name} <= L{name} <= M{name}, got {k}, {l}, {m}"));
            }
        }
        if self.c == 0 || self.c > s {
            return bad(format!("need 0 < C <= S, got C={} S={s}", self.c));
        }
        for (n, (&t, ext)) in self.block.iter().zip([self.l1, self.l2, self.c]).enumerate() {
            if t == 0 || ext % t != 0 {
                return bad(format!("block extent t{} = {t} does not divide {ext}", n + 1));
            }
        }
        if !(self.nu > 1.0) {
            return bad(format!("nu must exceed 1, got {}", self.nu));
        }
        if !(self.rho0 > 0.0 && self.rho_max >= self.rho0) {
            return bad(format!("need 0 < rho0 <= rho_max, got {} and {}", self.rho0, self.rho_max));
        }
        if !(self.mu > 0.0 && self.eps > 0.0 && self.cg_tol > 0.0 && self.prox_tol > 0.0) {
            return bad("mu, eps, cg_tol and prox_tol must be positive".into());
        }
        if self.admm_max_iter == 0 || self.cg_max_iter == 0 || self.prox_max_iter == 0 {
            return bad("iteration caps must be positive".into());
        }
        match self.gamma {
            GammaSpec::Absolute(g) | GammaSpec::RelativeToMedian(g) if !(g > 0.0 && g.is_finite()) => {
                return bad(format!("gamma must be positive, got {g}"));
            }
            _ => {}
        }
        if self.kr_truncate == Some(0) {
            return bad("kr_truncate must be positive".into());
        }
        Ok(())
    }
}
