//! Dense row-major tensors and the scalar trait the rest of the crate is
//! generic over.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::NnError;

/// Floating point scalar with a GEMM kernel attached.
///
/// Implemented for `f32` (training) and `f64` (gradient checks).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a * b + beta * c` with arbitrary strides.
    ///
    /// # Safety
    /// The pointers and strides must describe valid, non-overlapping (for `c`)
    /// matrices of the given sizes.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Whether a GEMM operand is read as stored or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

/// Row-major matrix product on plain slices.
///
/// `a` is stored as `a_rows x a_cols`, `b` as `b_rows x b_cols`; `op_a`/`op_b`
/// select transposition. The result is accumulated into `c` as
/// `c = a' b' + beta c`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<R: Real>(
    a: &[R],
    a_rows: usize,
    a_cols: usize,
    op_a: Op,
    b: &[R],
    b_rows: usize,
    b_cols: usize,
    op_b: Op,
    beta: R,
    c: &mut [R],
) {
    assert_eq!(a.len(), a_rows * a_cols, "lhs buffer does not match its shape");
    assert_eq!(b.len(), b_rows * b_cols, "rhs buffer does not match its shape");
    let (m, k, rsa, csa) = match op_a {
        Op::N => (a_rows, a_cols, a_cols as isize, 1),
        Op::T => (a_cols, a_rows, 1, a_cols as isize),
    };
    let (k2, n, rsb, csb) = match op_b {
        Op::N => (b_rows, b_cols, b_cols as isize, 1),
        Op::T => (b_cols, b_rows, 1, b_cols as isize),
    };
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(c.len(), m * n, "output buffer does not match the product shape");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: all three buffers were length-checked against the shapes above
    // and `c` is a distinct mutable borrow.
    unsafe {
        R::gemm_raw(
            m,
            k,
            n,
            R::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Dense tensor, row-major. Most of the crate only uses rank 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<R> {
    shape: Vec<usize>,
    data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![R::zero(); n] }
    }

    pub fn full(shape: Vec<usize>, value: R) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    /// Rank-2 tensor from row vectors. All rows must share a width.
    pub fn from_rows(rows: &[Vec<R>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NnError::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Self { shape: vec![rows.len(), cols], data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<R>) -> Result<Self, NnError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[R] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [R] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Matrix product `self * rhs` for rank-2 operands.
    pub fn matmul(&self, rhs: &Tensor<R>) -> Result<Tensor<R>, NnError> {
        if self.cols() != rhs.rows() {
            return Err(NnError::Shape(format!(
                "cannot multiply {:?} by {:?}",
                self.shape, rhs.shape
            )));
        }
        let mut out = Tensor::zeros(vec![self.rows(), rhs.cols()]);
        gemm(
            &self.data,
            self.rows(),
            self.cols(),
            Op::N,
            &rhs.data,
            rhs.rows(),
            rhs.cols(),
            Op::N,
            R::zero(),
            &mut out.data,
        );
        Ok(out)
    }

    /// Horizontal concatenation of two rank-2 tensors with equal row counts.
    pub fn hcat(&self, rhs: &Tensor<R>) -> Result<Tensor<R>, NnError> {
        if self.rows() != rhs.rows() {
            return Err(NnError::Shape(format!(
                "hcat row mismatch {:?} vs {:?}",
                self.shape, rhs.shape
            )));
        }
        let (a, b) = (self.cols(), rhs.cols());
        let mut data = Vec::with_capacity(self.rows() * (a + b));
        for i in 0..self.rows() {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(rhs.row(i));
        }
        Ok(Tensor { shape: vec![self.rows(), a + b], data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_product() {
        let a = Tensor::<f64>::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::<f64>::matrix(3, 2, vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn transposed_operands() {
        // a^T b with a: 3x2, b: 3x1
        let a = [1.0f64, 2., 3., 4., 5., 6.];
        let b = [1.0f64, 1., 1.];
        let mut c = [0.0; 2];
        gemm(&a, 3, 2, Op::T, &b, 3, 1, Op::N, 0.0, &mut c);
        assert_eq!(c, [9., 12.]);
        // b^T a^T... exercise op_b = T: (1x3)(3x2) with b stored as 2x3
        let bt = [1.0f64, 3., 5., 2., 4., 6.];
        let row = [1.0f64, 1., 1.];
        let mut c2 = [0.0; 2];
        gemm(&row, 1, 3, Op::N, &bt, 2, 3, Op::T, 0.0, &mut c2);
        assert_eq!(c2, [9., 12.]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
        let a = Tensor::<f32>::zeros(vec![2, 3]);
        assert!(a.matmul(&a).is_err());
    }
}
