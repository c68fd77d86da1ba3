use alloc::vec::Vec;

use super::Matrix;
use crate::math;

/// Tensor algebra shared by eager evaluation and tape recording.
///
/// Problem coefficients, closed-form solutions and networks are written
/// once against this trait and then run either on plain matrices
/// ([`Eager`]) or on a [`Tape`](super::Tape).
pub trait Ops {
    type T: Clone;

    fn constant(&self, m: Matrix) -> Self::T;
    fn shape(&self, a: &Self::T) -> (usize, usize);
    fn to_matrix(&self, a: &Self::T) -> Matrix;

    fn add(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn sub(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn mul(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn neg(&self, a: &Self::T) -> Self::T;
    fn scale(&self, a: &Self::T, c: f64) -> Self::T;
    fn matmul(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn transpose(&self, a: &Self::T) -> Self::T;
    fn sin(&self, a: &Self::T) -> Self::T;
    fn cos(&self, a: &Self::T) -> Self::T;
    fn exp(&self, a: &Self::T) -> Self::T;
    fn tanh(&self, a: &Self::T) -> Self::T;
    fn square(&self, a: &Self::T) -> Self::T;
    fn sum_all(&self, a: &Self::T) -> Self::T;
    fn sum_rows(&self, a: &Self::T) -> Self::T;
    fn sum_cols(&self, a: &Self::T) -> Self::T;
    fn broadcast_rows(&self, a: &Self::T, rows: usize) -> Self::T;
    fn broadcast_cols(&self, a: &Self::T, cols: usize) -> Self::T;
    fn broadcast_scalar(&self, a: &Self::T, rows: usize, cols: usize) -> Self::T;
    fn slice_cols(&self, a: &Self::T, start: usize, len: usize) -> Self::T;
    fn pad_cols(&self, a: &Self::T, start: usize, total: usize) -> Self::T;

    fn filled(&self, rows: usize, cols: usize, value: f64) -> Self::T {
        self.constant(Matrix::filled(rows, cols, value))
    }

    fn add_scalar(&self, a: &Self::T, c: f64) -> Self::T {
        let (r, k) = self.shape(a);
        self.add(a, &self.filled(r, k, c))
    }

    /// Multiplies each row of `a` by the matching entry of the column `col`.
    fn mul_col(&self, a: &Self::T, col: &Self::T) -> Self::T {
        let k = self.shape(a).1;
        self.mul(a, &self.broadcast_cols(col, k))
    }

    /// Adds the `1 x n` row `row` to every row of `a`.
    fn add_row(&self, a: &Self::T, row: &Self::T) -> Self::T {
        let r = self.shape(a).0;
        self.add(a, &self.broadcast_rows(row, r))
    }

    /// Row-wise inner products as an `m x 1` column.
    fn dot_rows(&self, a: &Self::T, b: &Self::T) -> Self::T {
        self.sum_cols(&self.mul(a, b))
    }

    fn concat_cols(&self, a: &Self::T, b: &Self::T) -> Self::T {
        let (ka, kb) = (self.shape(a).1, self.shape(b).1);
        self.add(&self.pad_cols(a, 0, ka + kb), &self.pad_cols(b, ka, ka + kb))
    }

    fn mean_all(&self, a: &Self::T) -> Self::T {
        let (r, k) = self.shape(a);
        self.scale(&self.sum_all(a), 1.0 / (r * k) as f64)
    }
}

/// Immediate evaluation on owned matrices.
#[derive(Debug, Clone, Copy, Default)]
pub struct Eager;

impl Ops for Eager {
    type T = Matrix;

    fn constant(&self, m: Matrix) -> Matrix {
        m
    }

    fn shape(&self, a: &Matrix) -> (usize, usize) {
        a.shape()
    }

    fn to_matrix(&self, a: &Matrix) -> Matrix {
        a.clone()
    }

    fn add(&self, a: &Matrix, b: &Matrix) -> Matrix {
        a.zip_map(b, |x, y| x + y)
    }

    fn sub(&self, a: &Matrix, b: &Matrix) -> Matrix {
        a.zip_map(b, |x, y| x - y)
    }

    fn mul(&self, a: &Matrix, b: &Matrix) -> Matrix {
        a.zip_map(b, |x, y| x * y)
    }

    fn neg(&self, a: &Matrix) -> Matrix {
        a.map(|x| -x)
    }

    fn scale(&self, a: &Matrix, c: f64) -> Matrix {
        a.scale(c)
    }

    fn matmul(&self, a: &Matrix, b: &Matrix) -> Matrix {
        a.matmul(b)
    }

    fn transpose(&self, a: &Matrix) -> Matrix {
        a.transpose()
    }

    fn sin(&self, a: &Matrix) -> Matrix {
        a.map(math::sin)
    }

    fn cos(&self, a: &Matrix) -> Matrix {
        a.map(math::cos)
    }

    fn exp(&self, a: &Matrix) -> Matrix {
        a.map(math::exp)
    }

    fn tanh(&self, a: &Matrix) -> Matrix {
        a.map(math::tanh)
    }

    fn square(&self, a: &Matrix) -> Matrix {
        a.map(|x| x * x)
    }

    fn sum_all(&self, a: &Matrix) -> Matrix {
        Matrix::scalar(a.sum_all())
    }

    fn sum_rows(&self, a: &Matrix) -> Matrix {
        a.sum_rows()
    }

    fn sum_cols(&self, a: &Matrix) -> Matrix {
        a.sum_cols()
    }

    fn broadcast_rows(&self, a: &Matrix, rows: usize) -> Matrix {
        a.broadcast_rows(rows)
    }

    fn broadcast_cols(&self, a: &Matrix, cols: usize) -> Matrix {
        a.broadcast_cols(cols)
    }

    fn broadcast_scalar(&self, a: &Matrix, rows: usize, cols: usize) -> Matrix {
        let s = a.as_scalar().expect("broadcast_scalar expects a 1x1 matrix");
        Matrix::filled(rows, cols, s)
    }

    fn slice_cols(&self, a: &Matrix, start: usize, len: usize) -> Matrix {
        a.slice_cols(start, len)
    }

    fn pad_cols(&self, a: &Matrix, start: usize, total: usize) -> Matrix {
        a.pad_cols(start, total)
    }

    fn add_scalar(&self, a: &Matrix, c: f64) -> Matrix {
        a.map(|x| x + c)
    }

    fn mul_col(&self, a: &Matrix, col: &Matrix) -> Matrix {
        assert_eq!(col.shape(), (a.rows(), 1), "mul_col shape mismatch");
        let mut out = a.clone();
        for r in 0..a.rows() {
            let s = col.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        out
    }

    fn concat_cols(&self, a: &Matrix, b: &Matrix) -> Matrix {
        assert_eq!(a.rows(), b.rows(), "concat_cols row mismatch");
        let mut data = Vec::with_capacity(a.len() + b.len());
        for r in 0..a.rows() {
            data.extend_from_slice(a.row(r));
            data.extend_from_slice(b.row(r));
        }
        Matrix::new(a.rows(), a.cols() + b.cols(), data).expect("sizes agree")
    }
}
