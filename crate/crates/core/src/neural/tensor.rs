use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Floating-point element type. Training runs in `f32`; gradient checks in
/// `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + std::iter::Sum + 'static
{
    /// `c = alpha * a * b + beta * c` with arbitrary strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
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

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts")
    }
}

impl Scalar for f32 {
    unsafe fn gemm(
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

impl Scalar for f64 {
    unsafe fn gemm(
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

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Mat {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "shape {rows}x{cols} vs {} values",
            data.len()
        );
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        Mat::from_vec(r, c, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn cast<U: Scalar>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|&v| v.as_f64()).collect())
            .collect()
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a = *a * s;
        }
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }
}

/// `out (+)= a * b`.
pub fn matmul_into<T: Scalar>(a: &Mat<T>, b: &Mat<T>, out: &mut Mat<T>, accumulate: bool) {
    assert_eq!(a.cols, b.rows);
    assert_eq!((out.rows, out.cols), (a.rows, b.cols));
    let beta = if accumulate { T::one() } else { T::zero() };
    unsafe {
        T::gemm(
            a.rows,
            a.cols,
            b.cols,
            T::one(),
            a.data.as_ptr(),
            a.cols as isize,
            1,
            b.data.as_ptr(),
            b.cols as isize,
            1,
            beta,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        )
    }
}

/// `out (+)= a * b^T`.
pub fn matmul_bt_into<T: Scalar>(a: &Mat<T>, b: &Mat<T>, out: &mut Mat<T>, accumulate: bool) {
    assert_eq!(a.cols, b.cols);
    assert_eq!((out.rows, out.cols), (a.rows, b.rows));
    let beta = if accumulate { T::one() } else { T::zero() };
    unsafe {
        T::gemm(
            a.rows,
            a.cols,
            b.rows,
            T::one(),
            a.data.as_ptr(),
            a.cols as isize,
            1,
            b.data.as_ptr(),
            1,
            b.cols as isize,
            beta,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        )
    }
}

/// `out (+)= a^T * b`.
pub fn matmul_at_into<T: Scalar>(a: &Mat<T>, b: &Mat<T>, out: &mut Mat<T>, accumulate: bool) {
    assert_eq!(a.rows, b.rows);
    assert_eq!((out.rows, out.cols), (a.cols, b.cols));
    let beta = if accumulate { T::one() } else { T::zero() };
    unsafe {
        T::gemm(
            a.cols,
            a.rows,
            b.cols,
            T::one(),
            a.data.as_ptr(),
            1,
            a.cols as isize,
            b.data.as_ptr(),
            b.cols as isize,
            1,
            beta,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        )
    }
}

pub fn matmul<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let mut out = Mat::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut out, false);
    out
}

pub fn matmul_bt<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let mut out = Mat::zeros(a.rows, b.rows);
    matmul_bt_into(a, b, &mut out, false);
    out
}
