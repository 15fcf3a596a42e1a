//! Dense row-major matrices and vectors over `f64`.
//!
//! This is the crate's entire numerical substrate: multiplication, transpose,
//! element-wise product, scaled addition, and the Frobenius norm, all in plain
//! loops over contiguous storage. Matrices here are tiny (layer weights,
//! feature tables), so clarity and exact, reproducible summation order beat
//! blocked or vectorised cleverness.
//!
//! Shape discipline: every operation that combines two operands checks their
//! dimensions and returns [`Error::ShapeMismatch`] / [`Error::LengthMismatch`]
//! naming both shapes — there is no broadcasting and no silent padding.
//! Inner products always accumulate left-to-right over ascending indices, so
//! two code paths that multiply the same numbers produce bit-identical sums.

use crate::error::{Error, Result};

/// A dense `rows x cols` matrix in row-major order. Both dimensions are at
/// least 1; a "scalar" is a 1x1 matrix and a column is an `n x 1` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Wrap `data` (row-major) as a `rows x cols` matrix.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimensions {
                op: "Matrix::new",
                detail: format!("dimensions must be at least 1x1, got {rows}x{cols}"),
            });
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidDimensions {
                op: "Matrix::new",
                detail: format!(
                    "{rows}x{cols} needs {} entries, got {}",
                    rows * cols,
                    data.len()
                ),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from explicit rows, which must be non-empty and equal-length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidDimensions {
                op: "Matrix::from_rows",
                detail: "no rows (or empty first row) given".to_string(),
            });
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidDimensions {
                    op: "Matrix::from_rows",
                    detail: format!("row 0 has {cols} entries but row {i} has {}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// The all-zeros matrix. Panics if either dimension is 0 — that is a
    /// programming error, not a data error.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "zeros: dimensions must be >= 1");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// The `n x n` identity.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry at (`r`, `c`); bounds are asserted, not checked softly.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(
            r < self.rows && c < self.cols,
            "index ({r}, {c}) out of bounds for {}x{} matrix",
            self.rows,
            self.cols
        );
        self.data[r * self.cols + c]
    }

    /// Overwrite the entry at (`r`, `c`).
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        assert!(
            r < self.rows && c < self.cols,
            "index ({r}, {c}) out of bounds for {}x{} matrix",
            self.rows,
            self.cols
        );
        self.data[r * self.cols + c] = value;
    }

    /// The underlying row-major storage.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable row-major storage, for in-place updates that keep the shape.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row `r` as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        assert!(r < self.rows, "row {r} out of bounds for {} rows", self.rows);
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Matrix product `self * rhs`. Inner sums run over ascending `k`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(self.shape_error("matmul", rhs));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut sum = 0.0;
                for k in 0..self.cols {
                    sum += self.data[i * self.cols + k] * rhs.data[k * rhs.cols + j];
                }
                out.data[i * rhs.cols + j] = sum;
            }
        }
        Ok(out)
    }

    /// Matrix–vector product `self * v`, treating `v` as a column.
    pub fn mul_vector(&self, v: &Vector) -> Result<Vector> {
        if self.cols != v.dim() {
            return Err(Error::LengthMismatch {
                op: "mul_vector",
                left: self.cols,
                right: v.dim(),
            });
        }
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let mut sum = 0.0;
            for k in 0..self.cols {
                sum += self.data[i * self.cols + k] * v.data[k];
            }
            out.push(sum);
        }
        Ok(Vector::new(out))
    }

    /// The transpose.
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Element-wise (Hadamard) product; shapes must match exactly.
    pub fn hadamard(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(self.shape_error("hadamard", rhs));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Sum of squared entries (the squared Frobenius norm).
    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// The Frobenius norm, `sqrt` of [`Matrix::sum_squares`].
    pub fn frobenius_norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    /// Every entry multiplied by `s`.
    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// True iff every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn shape_error(&self, op: &'static str, rhs: &Matrix) -> Error {
        Error::ShapeMismatch {
            op,
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: rhs.rows,
            right_cols: rhs.cols,
        }
    }
}

/// `alpha * a + b`, element-wise; shapes must match exactly.
pub fn axpy(alpha: f64, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::ShapeMismatch {
            op: "axpy",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| alpha * x + y)
        .collect();
    Ok(Matrix {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

/// The outer product `u * v^T` as a `u.dim() x v.dim()` matrix.
pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    let mut out = Matrix::zeros(u.dim(), v.dim());
    for i in 0..u.dim() {
        for j in 0..v.dim() {
            out.data[i * v.dim() + j] = u.data[i] * v.data[j];
        }
    }
    out
}

/// A dense vector of `f64`. Operations that pair two vectors check lengths;
/// there is no implicit resizing.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn zeros(n: usize) -> Self {
        Vector { data: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        assert!(i < self.data.len(), "index {i} out of bounds for dim {}", self.data.len());
        self.data[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        assert!(i < self.data.len(), "index {i} out of bounds for dim {}", self.data.len());
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// Inner product, accumulated over ascending indices.
    pub fn dot(&self, rhs: &Vector) -> Result<f64> {
        if self.dim() != rhs.dim() {
            return Err(Error::LengthMismatch {
                op: "dot",
                left: self.dim(),
                right: rhs.dim(),
            });
        }
        let mut sum = 0.0;
        for k in 0..self.data.len() {
            sum += self.data[k] * rhs.data[k];
        }
        Ok(sum)
    }

    /// True iff every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector::new(data)
    }
}
