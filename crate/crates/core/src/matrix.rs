//! Column-major dense matrix.
//!
//! Storage matches the tensor layout (first index fastest), so a matrix is
//! interchangeable with a 2-order [`DenseTensor`](crate::tensor::DenseTensor)
//! and with `nalgebra` column-major views without copying.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from column-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("matrix extents must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    /// Row-major literal, convenient for small fixed matrices.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("ragged row list"));
        }
        Self::new(r, c, (0..r * c).map(|k| rows[k % r][k / r]).collect())
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// Single-column matrix.
    pub fn column_vector(values: &[f64]) -> Self {
        Self::from_raw(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + self.rows * j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + self.rows * j] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn view(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.rows, self.cols)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self::from_raw(m.nrows(), m.ncols(), m.as_slice().to_vec())
    }

    /// Matrix product. Panics on an inner-dimension mismatch, like
    /// `ndarray::dot`.
    pub fn dot(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "dot: {}x{} times {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = DMatrix::<f64>::zeros(self.rows, rhs.cols);
        out.gemm(1.0, &self.view(), &rhs.view(), 0.0);
        Self::from_raw(self.rows, rhs.cols, out.data.into())
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn tdot(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, rhs.rows, "tdot: row counts differ");
        let mut out = DMatrix::<f64>::zeros(self.cols, rhs.cols);
        out.gemm_tr(1.0, &self.view(), &rhs.view(), 0.0);
        Self::from_raw(self.cols, rhs.cols, out.data.into())
    }

    pub fn add(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add: shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Self::from_raw(self.rows, self.cols, data)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub: shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Self::from_raw(self.rows, self.cols, data)
    }

    pub fn scale(&self, alpha: f64) -> DenseMatrix {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|v| v * alpha).collect())
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &DenseMatrix) {
        assert_eq!(self.shape(), x.shape(), "axpy: shape mismatch");
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += alpha * v;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn inner(&self, rhs: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "inner: shape mismatch");
        self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).sum()
    }

    /// Horizontal concatenation `[a, b, ...]`.
    pub fn hcat(blocks: &[&DenseMatrix]) -> Result<DenseMatrix> {
        let rows = blocks.first().map(|b| b.rows).ok_or_else(|| Error::shape("hcat of nothing"))?;
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::shape("hcat: row counts differ"));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        Ok(Self::from_raw(rows, cols, data))
    }

    /// Vertical concatenation.
    pub fn vcat(blocks: &[&DenseMatrix]) -> Result<DenseMatrix> {
        let cols = blocks.first().map(|b| b.cols).ok_or_else(|| Error::shape("vcat of nothing"))?;
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::shape("vcat: column counts differ"));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut out = Self::zeros(rows, cols);
        let mut offset = 0;
        for b in blocks {
            for j in 0..cols {
                out.data[offset + j * rows..offset + j * rows + b.rows].copy_from_slice(b.column(j));
            }
            offset += b.rows;
        }
        Ok(out)
    }

    /// Copy of rows `start..end`.
    pub fn row_block(&self, start: usize, end: usize) -> DenseMatrix {
        assert!(start <= end && end <= self.rows);
        Self::from_fn(end - start, self.cols, |i, j| self.get(start + i, j))
    }

    /// Copy of columns `start..end`.
    pub fn col_block(&self, start: usize, end: usize) -> DenseMatrix {
        assert!(start <= end && end <= self.cols);
        Self::from_raw(self.rows, end - start, self.data[start * self.rows..end * self.rows].to_vec())
    }

    pub fn max_abs_diff(&self, rhs: &DenseMatrix) -> f64 {
        self.data.iter().zip(&rhs.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Column-major vectorization.
pub fn vec(m: &DenseMatrix) -> Vec<f64> {
    m.data.clone()
}

/// Inverse of [`vec`].
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.len() != rows * cols {
        return Err(Error::shape(format!("cannot unvec {} entries into {rows}x{cols}", v.len())));
    }
    DenseMatrix::new(rows, cols, v.to_vec())
}
