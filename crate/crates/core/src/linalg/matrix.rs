use std::fmt;
use std::ops::{Index, IndexMut};

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// This is the value type for attributes, adjacencies, embeddings and
/// correlation matrices alike. Storage is an [`ndarray::Array2`] so products
/// go through an optimized GEMM kernel.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    data: Array2<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_array(Array2::zeros((rows, cols)))
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_array(Array2::from_elem((rows, cols), value))
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_array(Array2::eye(n))
    }

    /// Builds a matrix from row-major values.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Contract(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        let data = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| Error::Contract(e.to_string()))?;
        Ok(Self { data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Contract(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, values)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut((usize, usize)) -> f64) -> Self {
        Self::from_array(Array2::from_shape_fn((rows, cols), f))
    }

    pub fn from_array(data: Array2<f64>) -> Self {
        // Keep row-major layout so `as_slice` is always available.
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Self { data }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn array_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    /// Row-major values.
    pub fn as_slice(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("matrix storage is always standard layout")
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data
            .as_slice_mut()
            .expect("matrix storage is always standard layout")
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.as_slice()[i * c..(i + 1) * c]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Self::from_array(self.data.t().to_owned())
    }

    pub fn dot(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(Self::from_array(self.data.dot(&rhs.data)))
    }

    fn check_same(&self, rhs: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.check_same(rhs, "add")?;
        Ok(Self::from_array(&self.data + &rhs.data))
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.check_same(rhs, "sub")?;
        Ok(Self::from_array(&self.data - &rhs.data))
    }

    pub fn hadamard(&self, rhs: &Matrix) -> Result<Matrix> {
        self.check_same(rhs, "hadamard")?;
        Ok(Self::from_array(&self.data * &rhs.data))
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Self::from_array(&self.data * c)
    }

    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Matrix {
        Self::from_array(self.data.mapv(f))
    }

    pub fn sum(&self) -> f64 {
        self.data.sum()
    }

    /// Sum of each row, as an `rows x 1` column.
    pub fn row_sums(&self) -> Matrix {
        let s = self.data.sum_axis(Axis(1));
        Self::from_array(s.insert_axis(Axis(1)))
    }

    /// Sum of each column, as a `1 x cols` row.
    pub fn col_sums(&self) -> Matrix {
        let s = self.data.sum_axis(Axis(0));
        Self::from_array(s.insert_axis(Axis(0)))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    /// Largest absolute element-wise difference. Shapes must agree.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.rows();
        n == self.cols()
            && (0..n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Solves `self · X = rhs` by LU decomposition with partial pivoting.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        let n = self.rows();
        if n != self.cols() || rhs.rows() != n {
            return Err(Error::Shape {
                op: "solve",
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let m = rhs.cols();
        let mut a = self.as_slice().to_vec();
        let mut b = rhs.as_slice().to_vec();
        let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&x, &y| a[x * n + k].abs().total_cmp(&a[y * n + k].abs()))
                .unwrap_or(k);
            if a[pivot * n + k].abs() <= 1e-14 * scale {
                return Err(Error::Numeric(format!("singular system at column {k}")));
            }
            if pivot != k {
                for j in 0..n {
                    a.swap(k * n + j, pivot * n + j);
                }
                for j in 0..m {
                    b.swap(k * m + j, pivot * m + j);
                }
            }
            let diag = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / diag;
                if f == 0.0 {
                    continue;
                }
                a[i * n + k] = 0.0;
                for j in (k + 1)..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                for j in 0..m {
                    b[i * m + j] -= f * b[k * m + j];
                }
            }
        }
        for k in (0..n).rev() {
            let diag = a[k * n + k];
            for j in 0..m {
                let mut acc = b[k * m + j];
                for t in (k + 1)..n {
                    acc -= a[k * n + t] * b[t * m + j];
                }
                b[k * m + j] = acc / diag;
            }
        }
        Matrix::from_vec(n, m, b)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.data[idx]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut f64 {
        &mut self.data[idx]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.to_rows())
    }
}
