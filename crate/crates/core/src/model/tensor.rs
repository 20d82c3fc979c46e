//! Dense row-major tensors and the handful of kernels the captioner needs.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Scalar type the network is generic over: `f32` for training and
/// checkpoints, `f64` for gradient checking.
pub trait Real:
    Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A matrix (`rows x cols`) or, with `cols == 1`, a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn vector(len: usize) -> Self {
        Self::zeros(len, 1)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| U::from(v).expect("representable")).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::zero());
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes;
/// the summation order is fixed, so results are reproducible.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a * x`
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out[i] = W[first + i] . x` for `i in 0..out.len()`.
pub fn matvec_rows<T: Real>(w: &Tensor<T>, first: usize, x: &[T], out: &mut [T]) {
    debug_assert_eq!(w.cols, x.len());
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(w.row(first + i), x);
    }
}

/// `out = W x + b`
pub fn affine<T: Real>(w: &Tensor<T>, b: &Tensor<T>, x: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); w.rows];
    matvec_rows(w, 0, x, &mut out);
    for (o, &bi) in out.iter_mut().zip(&b.data) {
        *o += bi;
    }
    out
}

/// `out += W[first..first+dy.len()]^T dy`
pub fn matvec_t_rows_acc<T: Real>(w: &Tensor<T>, first: usize, dy: &[T], out: &mut [T]) {
    debug_assert_eq!(w.cols, out.len());
    for (i, &d) in dy.iter().enumerate() {
        if d != T::zero() {
            axpy(d, w.row(first + i), out);
        }
    }
}

/// `dW[first + i] += dy[i] * x`
pub fn add_outer_rows<T: Real>(dw: &mut Tensor<T>, first: usize, dy: &[T], x: &[T]) {
    for (i, &d) in dy.iter().enumerate() {
        if d != T::zero() {
            axpy(d, x, dw.row_mut(first + i));
        }
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}
