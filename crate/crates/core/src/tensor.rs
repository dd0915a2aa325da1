//! N-order dense tensors and the multilinear primitives used everywhere
//! else: mode-n unfolding/folding, mode-n products and Tucker
//! reconstruction.
//!
//! Layout is column-major: the first index varies fastest. With this layout
//! the mode-1 unfolding of a tensor is a reshape, and the Kronecker identity
//! `vec(G ×1 U1 ×2 U2 ×3 U3) = (U3 ⊗ U2 ⊗ U1) vec(G)` holds verbatim.
//! Mode indices are 1-based throughout, matching the `×n` notation.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape(format!("dims {dims:?} need {len} entries, got {}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { dims, data })
    }

    pub(crate) fn from_raw(dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    /// Panics unless `dims` is nonempty with positive extents.
    pub fn zeros(dims: &[usize]) -> Self {
        assert_valid_dims(dims);
        Self::from_raw(dims.to_vec(), vec![0.0; dims.iter().product()])
    }

    /// Evaluates `f` at every multi-index, in layout order. Panics unless
    /// `dims` is nonempty with positive extents.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        assert_valid_dims(dims);
        let len: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for (k, d) in idx.iter_mut().zip(dims) {
                *k += 1;
                if *k < *d {
                    break;
                }
                *k = 0;
            }
        }
        Self::from_raw(dims.to_vec(), data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        let mut stride = 1;
        let mut at = 0;
        for (i, d) in idx.iter().zip(&self.dims) {
            at += i * stride;
            stride *= d;
        }
        at
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: f64) -> DenseTensor {
        Self::from_raw(self.dims.clone(), self.data.iter().map(|v| v * alpha).collect())
    }

    /// `self += alpha * x`. Panics on shape mismatch.
    pub fn axpy(&mut self, alpha: f64, x: &DenseTensor) {
        assert_eq!(self.dims, x.dims, "axpy: dims differ");
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += alpha * v;
        }
    }

    pub fn add(&self, rhs: &DenseTensor) -> DenseTensor {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }

    pub fn sub(&self, rhs: &DenseTensor) -> DenseTensor {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }

    pub fn max_abs_diff(&self, rhs: &DenseTensor) -> f64 {
        self.data.iter().zip(&rhs.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Views a 2-order tensor as a matrix (no data movement).
    pub fn to_matrix(&self) -> Result<DenseMatrix> {
        match self.dims[..] {
            [r, c] => Ok(DenseMatrix::from_raw(r, c, self.data.clone())),
            _ => Err(Error::shape(format!("tensor of dims {:?} is not a matrix", self.dims))),
        }
    }

    pub fn from_matrix(m: &DenseMatrix) -> Self {
        Self::from_raw(vec![m.rows(), m.cols()], m.data().to_vec())
    }

    /// Relative Frobenius distance `‖self − rhs‖ / ‖rhs‖` (absolute when
    /// `rhs` is zero).
    pub fn relative_error(&self, reference: &DenseTensor) -> f64 {
        let diff = self.sub(reference).frobenius_norm();
        let base = reference.frobenius_norm();
        if base > 0.0 {
            diff / base
        } else {
            diff
        }
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::shape(format!("tensor extents must be positive, got {dims:?}")));
    }
    Ok(())
}

fn assert_valid_dims(dims: &[usize]) {
    if let Err(e) = check_dims(dims) {
        panic!("{e}");
    }
}

fn check_mode(order: usize, mode: usize) -> Result<()> {
    if mode == 0 || mode > order {
        return Err(Error::invalid(format!("mode {mode} out of range 1..={order}")));
    }
    Ok(())
}

/// Splits extents around mode `n` (1-based) into (left, I_n, right) products.
fn split(dims: &[usize], mode: usize) -> (usize, usize, usize) {
    let left = dims[..mode - 1].iter().product();
    let right = dims[mode..].iter().product();
    (left, dims[mode - 1], right)
}

/// Mode-n unfolding `A_[n]` (`I_n × ∏_{k≠n} I_k`). The remaining indices
/// enumerate columns lexicographically, lowest index fastest.
pub fn mode_unfold(t: &DenseTensor, mode: usize) -> Result<DenseMatrix> {
    check_mode(t.order(), mode)?;
    let (left, n, right) = split(&t.dims, mode);
    if left == 1 {
        return Ok(DenseMatrix::from_raw(n, right, t.data.clone()));
    }
    let mut out = vec![0.0; t.len()];
    for r in 0..right {
        let slab = &t.data[r * left * n..(r + 1) * left * n];
        for i in 0..n {
            for l in 0..left {
                out[i + n * (l + left * r)] = slab[l + left * i];
            }
        }
    }
    Ok(DenseMatrix::from_raw(n, left * right, out))
}

/// Inverse of [`mode_unfold`].
pub fn mode_fold(m: &DenseMatrix, mode: usize, dims: &[usize]) -> Result<DenseTensor> {
    check_dims(dims)?;
    check_mode(dims.len(), mode)?;
    let (left, n, right) = split(dims, mode);
    if m.rows() != n || m.cols() != left * right {
        return Err(Error::shape(format!(
            "{}x{} matrix cannot fold along mode {mode} into {dims:?}",
            m.rows(),
            m.cols()
        )));
    }
    if left == 1 {
        return Ok(DenseTensor::from_raw(dims.to_vec(), m.data().to_vec()));
    }
    let src = m.data();
    let mut out = vec![0.0; src.len()];
    for r in 0..right {
        let slab = &mut out[r * left * n..(r + 1) * left * n];
        for i in 0..n {
            for l in 0..left {
                slab[l + left * i] = src[i + n * (l + left * r)];
            }
        }
    }
    Ok(DenseTensor::from_raw(dims.to_vec(), out))
}

/// Mode-n product `t ×n u`, defined by `(t ×n u)_[n] = u · t_[n]`.
pub fn mode_product(t: &DenseTensor, u: &DenseMatrix, mode: usize) -> Result<DenseTensor> {
    check_mode(t.order(), mode)?;
    let (left, n, right) = split(&t.dims, mode);
    if u.cols() != n {
        return Err(Error::shape(format!(
            "mode-{mode} product needs {n} columns, factor is {}x{}",
            u.rows(),
            u.cols()
        )));
    }
    let j = u.rows();
    let mut dims = t.dims.clone();
    dims[mode - 1] = j;
    let mut out = vec![0.0; left * j * right];

    if left == 1 {
        // Plain matrix product on the (I_n × rest) reshape.
        let src = DMatrixView::from_slice(&t.data, n, right);
        let mut dst = DMatrixViewMut::from_slice(&mut out, j, right);
        dst.gemm(1.0, &u.view(), &src, 0.0);
    } else {
        // Each trailing slab is a left×I_n matrix; multiply by uᵀ on the right.
        let ut: DMatrix<f64> = u.view().transpose();
        for r in 0..right {
            let src = DMatrixView::from_slice(&t.data[r * left * n..(r + 1) * left * n], left, n);
            let mut dst = DMatrixViewMut::from_slice(&mut out[r * left * j..(r + 1) * left * j], left, j);
            dst.gemm(1.0, &src, &ut, 0.0);
        }
    }
    Ok(DenseTensor::from_raw(dims, out))
}

/// Applies `factors[k]` along mode `k + 1` for every factor given.
pub fn multi_mode_product(t: &DenseTensor, factors: &[&DenseMatrix]) -> Result<DenseTensor> {
    if factors.len() > t.order() {
        return Err(Error::shape("more factors than tensor modes"));
    }
    let mut acc = t.clone();
    for (k, u) in factors.iter().enumerate() {
        acc = mode_product(&acc, u, k + 1)?;
    }
    Ok(acc)
}

/// Core tensor plus one factor matrix per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    pub core: DenseTensor,
    pub u1: DenseMatrix,
    pub u2: DenseMatrix,
    pub u3: DenseMatrix,
}

impl TuckerFactors {
    pub fn new(core: DenseTensor, u1: DenseMatrix, u2: DenseMatrix, u3: DenseMatrix) -> Result<Self> {
        let f = Self { core, u1, u2, u3 };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.core.dims();
        if d.len() != 3 {
            return Err(Error::shape(format!("core must be 3-order, got {d:?}")));
        }
        for (k, u) in [&self.u1, &self.u2, &self.u3].iter().enumerate() {
            if u.cols() != d[k] {
                return Err(Error::shape(format!(
                    "factor {} has {} columns but core extent is {}",
                    k + 1,
                    u.cols(),
                    d[k]
                )));
            }
        }
        Ok(())
    }

    /// Extents of the reconstructed tensor.
    pub fn full_dims(&self) -> [usize; 3] {
        [self.u1.rows(), self.u2.rows(), self.u3.rows()]
    }
}

/// `G ×1 U1 ×2 U2 ×3 U3`.
pub fn tucker_reconstruct(f: &TuckerFactors) -> Result<DenseTensor> {
    f.validate()?;
    multi_mode_product(&f.core, &[&f.u1, &f.u2, &f.u3])
}

pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.frobenius_norm()
}

pub fn inner_product(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.dims != b.dims {
        return Err(Error::shape(format!("inner product of {:?} and {:?}", a.dims, b.dims)));
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Layout-order vectorization of a tensor.
pub fn vec(t: &DenseTensor) -> Vec<f64> {
    t.data.clone()
}
