use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Element type of tensors and parameters.
///
/// Storage defaults to `f32`; `f64` is the high-precision compute mode used by
/// the finite-difference oracle.
pub trait Scalar:
    Float + Debug + Default + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    const BYTES: usize;

    fn of(x: f64) -> Self;
    fn f64(self) -> f64;

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    /// Dot product with eight independent accumulators so the loop vectorizes.
    /// The summation order is fixed, so results are reproducible.
    #[inline]
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = [Self::zero(); 8];
        let chunks = a.len() / 8;
        for i in 0..chunks {
            let xa = &a[i * 8..i * 8 + 8];
            let xb = &b[i * 8..i * 8 + 8];
            for l in 0..8 {
                acc[l] += xa[l] * xb[l];
            }
        }
        let mut tail = Self::zero();
        for i in chunks * 8..a.len() {
            tail += a[i] * b[i];
        }
        ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
    }

    #[inline]
    fn sum_slice(a: &[Self]) -> Self {
        let mut acc = [Self::zero(); 8];
        let chunks = a.len() / 8;
        for i in 0..chunks {
            let xa = &a[i * 8..i * 8 + 8];
            for l in 0..8 {
                acc[l] += xa[l];
            }
        }
        let mut tail = Self::zero();
        for &x in &a[chunks * 8..] {
            tail += x;
        }
        ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
    }

    /// `y += alpha * x`
    #[inline]
    fn axpy(alpha: Self, x: &[Self], y: &mut [Self]) {
        debug_assert_eq!(x.len(), y.len());
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi += alpha * xi;
        }
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

pub(crate) fn all_finite<T: Scalar>(xs: &[T]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

pub(crate) fn cast_slice<T: Scalar, U: Scalar>(xs: &[T]) -> Vec<U> {
    xs.iter().map(|&x| U::of(x.f64())).collect()
}
