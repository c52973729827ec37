//! Dense row-major matrices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::{Error, Result};

/// Floating-point element type. Models are stored as `f32`; gradient checks
/// run the same code paths in `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + core::iter::Sum + 'static
{
    /// Converts an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    /// Widens to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense 2-D array in row-major order.
#[derive(Clone, PartialEq, Debug)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Single-row matrix.
    pub fn row_vector(values: &[T]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        (0..self.rows).map(move |r| self.row(r))
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&Matrix<T>]) -> Result<Self> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::Dimension(format!(
                    "cannot stack {} columns onto {cols}",
                    m.cols
                )));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Self { rows, cols, data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.as_f64()).expect("castable"))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Ordinary product `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix<T>) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                axpy(dst, a, rhs.row(k));
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ`, the shape every dense layer forward pass needs.
    pub fn matmul_transposed(&self, rhs: &Matrix<T>) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by the transpose of {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let x = self.row(i);
            for j in 0..rhs.rows {
                out.data[i * rhs.rows + j] = dot(x, rhs.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`, used for weight gradients.
    pub fn transposed_matmul(&self, rhs: &Matrix<T>) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply the transpose of {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for n in 0..self.rows {
            let b = rhs.row(n);
            for (i, &a) in self.row(n).iter().enumerate() {
                if a != T::zero() {
                    axpy(&mut out.data[i * rhs.cols..(i + 1) * rhs.cols], a, b);
                }
            }
        }
        Ok(out)
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<T> {
        let mut acc = vec![0.0f64; self.cols];
        for r in self.row_iter() {
            for (a, &v) in acc.iter_mut().zip(r) {
                *a += v.as_f64();
            }
        }
        let n = self.rows.max(1) as f64;
        acc.into_iter().map(|a| T::lit(a / n)).collect()
    }

    pub(crate) fn ensure_same_shape(&self, other: &Matrix<T>, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

#[inline]
pub(crate) fn axpy<T: Scalar>(dst: &mut [T], alpha: T, x: &[T]) {
    for (d, &v) in dst.iter_mut().zip(x) {
        *d = *d + alpha * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(
            Matrix::<f32>::new(2, 2, vec![1.0; 3]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn products_agree() {
        let a = Matrix::<f64>::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let b = Matrix::<f64>::from_rows(&[[1.0, 0.0, -1.0], [2.0, 1.0, 0.5]]).unwrap();
        let direct = a.matmul(&b.transpose()).unwrap();
        assert_eq!(direct, a.matmul_transposed(&b).unwrap());
        assert_eq!(
            a.transpose().matmul(&b).unwrap(),
            a.transposed_matmul(&b).unwrap()
        );
        assert_eq!(direct.as_slice(), &[-2.0, 5.5, -2.0, 16.0]);
    }

    #[test]
    fn select_and_stack() {
        let a = Matrix::<f32>::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let s = a.select_rows(&[2, 0]);
        assert_eq!(s.as_slice(), &[3.0, 1.0]);
        let st = Matrix::vstack(&[&a, &s]).unwrap();
        assert_eq!(st.rows(), 5);
    }
}
