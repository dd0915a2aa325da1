//! Blockwise unfolding and column-group sparsity penalties.
//!
//! `b_unfold` cuts a tensor into equal `t1×…×tN` sub-blocks and flattens
//! each block into one column, so block sparsity of the tensor becomes
//! column sparsity of the matrix. With `i_n = a_n + t_n·b_n`, entry
//! `(a, b)` lands at row `a1 + t1·a2 + t1t2·a3 + …` and column
//! `b1 + s1·b2 + s1s2·b3 + …`, where `s_n = T_n / t_n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub t: Vec<usize>,
}

impl BlockShape {
    pub fn new(t: Vec<usize>) -> Result<Self> {
        if t.is_empty() || t.contains(&0) {
            return Err(Error::invalid(format!("block extents must be positive, got {t:?}")));
        }
        Ok(Self { t })
    }

    /// Number of blocks along each mode for a tensor of extents `dims`.
    pub fn counts(&self, dims: &[usize]) -> Result<Vec<usize>> {
        if dims.len() != self.t.len() {
            return Err(Error::shape(format!("block shape {:?} does not match order of {dims:?}", self.t)));
        }
        dims.iter()
            .zip(&self.t)
            .map(|(&d, &t)| {
                if d % t == 0 {
                    Ok(d / t)
                } else {
                    Err(Error::invalid(format!("block extent {t} does not divide {d}")))
                }
            })
            .collect()
    }
}

/// For each layout-order entry, its `(row, col)` in the B-unfolding.
fn block_positions(dims: &[usize], t: &[usize], s: &[usize]) -> Vec<(usize, usize)> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..total {
        let (mut row, mut col, mut rs, mut cs) = (0, 0, 1, 1);
        for n in 0..dims.len() {
            row += (idx[n] % t[n]) * rs;
            col += (idx[n] / t[n]) * cs;
            rs *= t[n];
            cs *= s[n];
        }
        out.push((row, col));
        for n in 0..dims.len() {
            idx[n] += 1;
            if idx[n] < dims[n] {
                break;
            }
            idx[n] = 0;
        }
    }
    out
}

pub fn b_unfold(x: &DenseTensor, bs: &BlockShape) -> Result<DenseMatrix> {
    let s = bs.counts(x.dims())?;
    let rows: usize = bs.t.iter().product();
    let cols: usize = s.iter().product();
    let mut out = DenseMatrix::zeros(rows, cols);
    for (v, (r, c)) in x.data().iter().zip(block_positions(x.dims(), &bs.t, &s)) {
        out.set(r, c, *v);
    }
    Ok(out)
}

pub fn b_fold(m: &DenseMatrix, bs: &BlockShape, dims: &[usize]) -> Result<DenseTensor> {
    let s = bs.counts(dims)?;
    let rows: usize = bs.t.iter().product();
    let cols: usize = s.iter().product();
    if m.shape() != (rows, cols) {
        return Err(Error::shape(format!("B-unfolding is {:?}, expected {rows}x{cols}", m.shape())));
    }
    let data = block_positions(dims, &bs.t, &s).into_iter().map(|(r, c)| m.get(r, c)).collect();
    DenseTensor::new(dims.to_vec(), data)
}

fn column_norms(m: &DenseMatrix) -> impl Iterator<Item = f64> + '_ {
    (0..m.cols()).map(|j| m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Number of nonzero columns (exact test).
pub fn l20(m: &DenseMatrix) -> usize {
    (0..m.cols()).filter(|&j| m.column(j).iter().any(|&v| v != 0.0)).count()
}

/// Number of columns with Euclidean norm above `eps`.
pub fn l20_tol(m: &DenseMatrix, eps: f64) -> usize {
    column_norms(m).filter(|&n| n > eps).count()
}

/// `Σ_i 1 − exp(−‖g_i‖/γ)`.
pub fn l2gamma(m: &DenseMatrix, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(column_norms(m).map(|n| 1.0 - (-n / gamma).exp()).sum())
}

/// Elementwise `sign(x)·max(|x| − τ, 0)`.
pub fn soft_threshold(m: &DenseMatrix, tau: f64) -> DenseMatrix {
    let mut out = m.clone();
    for v in out.data_mut() {
        *v = v.signum() * (v.abs() - tau).max(0.0);
        if *v == 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Columnwise scalar objective `h(t) = ρ/2 (t − n)² + 1 − exp(−t/γ)`.
pub fn prox_objective(t: f64, norm: f64, rho: f64, gamma: f64) -> f64 {
    0.5 * rho * (t - norm).powi(2) + 1.0 - (-t / gamma).exp()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProxStats {
    /// Columns whose fixed-point iteration hit `max_iter`.
    pub unconverged: usize,
}

/// Minimizer of `h` over `t ≥ 0` for one column norm. Returns the shrunk
/// norm and whether the fixed-point stage converged.
pub fn prox_scalar(norm: f64, rho: f64, gamma: f64, tol: f64, max_iter: usize) -> (f64, bool) {
    if norm == 0.0 {
        return (0.0, true);
    }
    let fixed = |t: f64| (norm - (-t / gamma).exp() / (rho * gamma)).max(0.0);
    let mut t = norm;
    let mut converged = false;
    for _ in 0..max_iter {
        let next = fixed(t);
        let step = (next - t).abs();
        t = next;
        if step <= tol * norm.max(1.0) {
            converged = true;
            break;
        }
    }

    // h' is convex, so on [t_c, n] (t_c the inflection point) it is
    // increasing and its larger root is the only interior local minimum.
    let dh = |t: f64| rho * (t - norm) + (-t / gamma).exp() / gamma;
    let ddh = |t: f64| rho - (-t / gamma).exp() / (gamma * gamma);
    let t_c = (-gamma * (rho * gamma * gamma).ln()).max(0.0);
    let mut candidates = vec![0.0, t];
    if t_c < norm && dh(t_c) < 0.0 {
        let (mut lo, mut hi) = (t_c, norm);
        let mut x = t.clamp(lo, hi);
        for _ in 0..200 {
            let g = dh(x);
            if g == 0.0 {
                break;
            }
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - g / ddh(x);
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-15 * norm.max(1.0) {
                break;
            }
        }
        candidates.push(x);
    }
    let best = candidates
        .into_iter()
        .min_by(|a, b| prox_objective(*a, norm, rho, gamma).total_cmp(&prox_objective(*b, norm, rho, gamma)))
        .expect("nonempty");
    (best, converged)
}

/// Columnwise proximal map of `‖·‖_{2,γ}` with weight `ρ`.
pub fn prox_l2gamma(m: &DenseMatrix, rho: f64, gamma: f64, tol: f64, max_iter: usize) -> Result<DenseMatrix> {
    prox_l2gamma_with_stats(m, rho, gamma, tol, max_iter).map(|(out, _)| out)
}

pub fn prox_l2gamma_with_stats(
    m: &DenseMatrix,
    rho: f64,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(DenseMatrix, ProxStats)> {
    if !(rho > 0.0 && gamma > 0.0) {
        return Err(Error::invalid(format!("rho and gamma must be positive, got {rho}, {gamma}")));
    }
    let mut out = m.clone();
    let rows = m.rows();
    let flags: Vec<bool> = out
        .data_mut()
        .par_chunks_mut(rows)
        .map(|col| {
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let (t, ok) = prox_scalar(norm, rho, gamma, tol, max_iter);
            if norm > 0.0 {
                let f = t / norm;
                for v in col.iter_mut() {
                    *v *= f;
                }
            }
            ok
        })
        .collect();
    let unconverged = flags.iter().filter(|ok| !**ok).count();
    if unconverged > 0 {
        log::debug!("prox fixed point hit max_iter on {unconverged} columns");
    }
    Ok((out, ProxStats { unconverged }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_tensor(dims: &[usize]) -> DenseTensor {
        let n: usize = dims.iter().product();
        DenseTensor::new(dims.to_vec(), (0..n).map(|i| i as f64 + 1.0).collect()).unwrap()
    }

    #[test]
    fn full_block_is_vec() {
        let x = seq_tensor(&[3, 2, 2]);
        let m = b_unfold(&x, &BlockShape::new(vec![3, 2, 2]).unwrap()).unwrap();
        assert_eq!(m.shape(), (12, 1));
        assert_eq!(m.data(), x.data());
    }

    #[test]
    fn unit_blocks_are_row() {
        let x = seq_tensor(&[3, 2, 2]);
        let m = b_unfold(&x, &BlockShape::new(vec![1, 1, 1]).unwrap()).unwrap();
        assert_eq!(m.shape(), (1, 12));
        assert_eq!(m.data(), x.data());
    }

    #[test]
    fn blocks_match_brute_force() {
        let x = seq_tensor(&[4, 4, 2]);
        let m = b_unfold(&x, &BlockShape::new(vec![2, 2, 1]).unwrap()).unwrap();
        assert_eq!(m.shape(), (4, 8));
        let mut cols: Vec<Vec<f64>> = (0..8).map(|j| m.column(j).to_vec()).collect();
        let mut blocks = Vec::new();
        for b3 in 0..2 {
            for b2 in 0..2 {
                for b1 in 0..2 {
                    let mut blk = Vec::new();
                    for a2 in 0..2 {
                        for a1 in 0..2 {
                            blk.push(x.get(&[2 * b1 + a1, 2 * b2 + a2, b3]));
                        }
                    }
                    blocks.push(blk);
                }
            }
        }
        let key = |v: &Vec<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        cols.sort_by_key(key);
        blocks.sort_by_key(key);
        assert_eq!(cols, blocks);
    }

    #[test]
    fn fold_roundtrip_and_errors() {
        let x = seq_tensor(&[8, 8, 4]);
        let bs = BlockShape::new(vec![4, 4, 2]).unwrap();
        let m = b_unfold(&x, &bs).unwrap();
        assert_eq!(b_fold(&m, &bs, &[8, 8, 4]).unwrap(), x);
        assert_eq!(b_fold(&DenseMatrix::zeros(32, 8), &bs, &[8, 8, 4]).unwrap(), DenseTensor::zeros(&[8, 8, 4]));
        assert!(b_unfold(&seq_tensor(&[6, 8, 4]), &bs).is_err());
        assert!(b_fold(&m, &bs, &[8, 8, 2]).is_err());
    }

    #[test]
    fn block_support_survives_roundtrip() {
        let bs = BlockShape::new(vec![2, 2, 2]).unwrap();
        let x = DenseTensor::from_fn(&[4, 4, 4], |i| if i[0] < 2 && i[2] >= 2 { 1.0 + i[1] as f64 } else { 0.0 });
        let m = b_unfold(&x, &bs).unwrap();
        assert_eq!(l20(&m), 2);
        assert_eq!(b_fold(&m, &bs, &[4, 4, 4]).unwrap(), x);
    }

    #[test]
    fn l20_cases() {
        assert_eq!(l20(&DenseMatrix::zeros(3, 4)), 0);
        assert_eq!(l20(&DenseMatrix::identity(5)), 5);
        let m = DenseMatrix::from_fn(4, 10, |i, j| if [1, 4, 9].contains(&j) { i as f64 + 1.0 } else { 0.0 });
        assert_eq!(l20(&m), 3);
        assert_eq!(l20_tol(&m.scale(1e-9), 1e-6), 0);
    }

    #[test]
    fn l2gamma_cases() {
        assert_eq!(l2gamma(&DenseMatrix::zeros(3, 3), 1.0).unwrap(), 0.0);
        let col = DenseMatrix::column_vector(&[0.6, 0.8]);
        assert!((l2gamma(&col.scale(2.0), 2.0).unwrap() - (1.0 - (-1f64).exp())).abs() < 1e-15);
        let m = DenseMatrix::from_fn(3, 5, |i, j| if j % 2 == 0 { 1.0 + i as f64 } else { 0.0 });
        assert!((l2gamma(&m, 1e-6).unwrap() - l20(&m) as f64).abs() <= 1e-6 * 5.0);
        assert!(l2gamma(&m, 0.0).is_err());
    }

    #[test]
    fn soft_threshold_cases() {
        let m = DenseMatrix::from_rows(&[vec![0.5, -3.0, 2.0]]).unwrap();
        assert_eq!(soft_threshold(&m, 0.0), m);
        assert_eq!(soft_threshold(&m, 1.0).data(), &[0.0, -2.0, 1.0]);
    }

    #[test]
    fn prox_zero_and_large_norm() {
        let z = DenseMatrix::zeros(3, 2);
        assert_eq!(prox_l2gamma(&z, 1.0, 1.0, 1e-10, 100).unwrap(), z);
        // t = 10 − e^{−t}, by bisection on h'.
        let (mut lo, mut hi) = (9.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - 10.0 + (-mid).exp() > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (t, _) = prox_scalar(10.0, 1.0, 1.0, 1e-10, 100);
        assert!((t - lo).abs() < 1e-10, "{t} vs {lo}");
        assert!((10.0 - t - (-t).exp()).abs() < 1e-12);
    }

    #[test]
    fn prox_small_norm_grid() {
        let (rho, gamma, n) = (10.0, 0.5, 0.05);
        let mut best = (0.0, f64::INFINITY);
        for k in 0..=50_000 {
            let t = k as f64 * 1e-6;
            let h = prox_objective(t, n, rho, gamma);
            if h < best.1 {
                best = (t, h);
            }
        }
        let (t, _) = prox_scalar(n, rho, gamma, 1e-10, 100);
        assert!((t - best.0).abs() <= 1e-4);
        assert!(prox_objective(t, n, rho, gamma) <= best.1 + 1e-12);
    }

    #[test]
    fn prox_never_grows_columns() {
        let m = DenseMatrix::from_fn(5, 40, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin() * (j as f64 * 0.2));
        let (out, _) = prox_l2gamma_with_stats(&m, 0.7, 0.4, 1e-10, 100).unwrap();
        for j in 0..40 {
            let a: f64 = m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            let b: f64 = out.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(b <= a + 1e-15);
            assert!(prox_objective(b, a, 0.7, 0.4) <= prox_objective(0.0, a, 0.7, 0.4) + 1e-12);
            assert!(prox_objective(b, a, 0.7, 0.4) <= prox_objective(a, a, 0.7, 0.4) + 1e-12);
        }
    }
}
