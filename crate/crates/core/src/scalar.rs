use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type accepted by the numeric kernels.
///
/// Accumulations that need stability (dot products, norms, means, covariance)
/// are carried out in `f64` regardless of `Self`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-as-possible widening used for accumulation.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Narrowing with round-to-nearest.
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dot product accumulated in `f64`.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x.to_f64_lossy() * y.to_f64_lossy())
        .sum()
}

/// Squared Euclidean norm accumulated in `f64`.
#[inline]
pub fn norm_sq<T: Scalar>(a: &[T]) -> f64 {
    a.iter()
        .map(|&x| {
            let x = x.to_f64_lossy();
            x * x
        })
        .sum()
}

/// Squared Euclidean distance accumulated in `f64`.
#[inline]
pub fn dist_sq<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum()
}

/// Percentile by linear interpolation between order statistics at rank
/// `(n - 1) * p`. `sorted` must be ascending and non-empty; `p` in `[0, 1]`.
pub fn percentile_sorted<T: Scalar>(sorted: &[T], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let n = sorted.len();
    let rank = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let a = sorted[lo].to_f64_lossy();
    if lo == hi {
        return a;
    }
    let b = sorted[hi].to_f64_lossy();
    a + (rank - lo as f64) * (b - a)
}
