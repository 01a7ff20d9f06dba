//! Dense vector/matrix arithmetic. Deterministic, no BLAS, row-major storage.

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Dense real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector<F: Scalar> {
    pub data: Vec<F>,
}

impl<F: Scalar> Vector<F> {
    pub fn new(data: Vec<F>) -> Self {
        Self { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![F::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &Self) -> F {
        debug_assert_eq!(self.dim(), other.dim());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> F {
        self.dot(self)
    }

    pub fn norm(&self) -> F {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: F) -> Self {
        Self::new(self.data.iter().map(|&x| x * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        )
    }

    pub fn axpy(&mut self, s: F, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn dist(&self, other: &Self) -> F {
        self.sub(other).norm()
    }

    /// Unit-norm copy; returns an error when the norm underflows to zero.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == F::zero() {
            return Err(Error::NonFinite("normalize of zero vector".into()));
        }
        Ok(Self::new(self.data.iter().map(|&v| v / n).collect()))
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F: Scalar> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vector<F>]) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].dim() } else { 0 };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            debug_assert_eq!(row.dim(), c);
            data.extend_from_slice(&row.data);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = F::one();
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = A x
    pub fn matvec(&self, x: &Vector<F>) -> Result<Vector<F>> {
        if x.dim() != self.cols {
            return Err(Error::Shape(format!(
                "matvec: matrix is {}x{}, vector has dim {}",
                self.rows,
                self.cols,
                x.dim()
            )));
        }
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            out.push(
                self.row(r)
                    .iter()
                    .zip(&x.data)
                    .map(|(&a, &b)| a * b)
                    .sum(),
            );
        }
        Ok(Vector::new(out))
    }

    /// y = A^T x
    pub fn matvec_t(&self, x: &Vector<F>) -> Result<Vector<F>> {
        if x.dim() != self.rows {
            return Err(Error::Shape(format!(
                "matvec_t: matrix is {}x{}, vector has dim {}",
                self.rows,
                self.cols,
                x.dim()
            )));
        }
        let mut out = vec![F::zero(); self.cols];
        for r in 0..self.rows {
            let xr = x.data[r];
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * xr;
            }
        }
        Ok(Vector::new(out))
    }

    /// A += s * u v^T
    pub fn add_outer(&mut self, s: F, u: &Vector<F>, v: &Vector<F>) {
        debug_assert_eq!(u.dim(), self.rows);
        debug_assert_eq!(v.dim(), self.cols);
        for r in 0..self.rows {
            let su = s * u.data[r];
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (a, &b) in row.iter_mut().zip(&v.data) {
                *a += su * b;
            }
        }
    }

    pub fn axpy(&mut self, s: F, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }
}
