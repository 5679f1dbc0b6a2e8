//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
///
/// Everything in the detector is written against this trait. The symmetric
/// eigensolver is the only piece that has to be dispatched per concrete type.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    /// Widens the value to `f64`.
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("finite scalar")
    }

    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("representable count")
    }

    /// Full eigendecomposition of a symmetric matrix.
    ///
    /// Eigenvalues come back in descending order with matching eigenvector
    /// columns.
    fn symmetric_eigen(m: &DMatrix<Self>) -> Option<(DVector<Self>, DMatrix<Self>)>;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn symmetric_eigen(m: &DMatrix<$t>) -> Option<(DVector<$t>, DMatrix<$t>)> {
                let n = m.nrows();
                if n == 0 || m.ncols() != n {
                    return None;
                }
                let fm = faer::Mat::<$t>::from_fn(n, n, |i, j| m[(i, j)]);
                let evd = fm.self_adjoint_eigen(faer::Side::Lower).ok()?;
                let s = evd.S().column_vector();
                let u = evd.U();
                // faer returns ascending order.
                let values = DVector::from_fn(n, |k, _| s[n - 1 - k]);
                let vectors = DMatrix::from_fn(n, n, |i, k| u[(i, n - 1 - k)]);
                Some((values, vectors))
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_descending_and_reconstructs() {
        let m = DMatrix::<f64>::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let (vals, vecs) = f64::symmetric_eigen(&m).unwrap();
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((rebuilt - m).abs().max() < 1e-12);
    }

    #[test]
    fn eigen_f32() {
        let m = DMatrix::<f32>::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]);
        let (vals, _) = f32::symmetric_eigen(&m).unwrap();
        assert!((vals[0] - 5.0).abs() < 1e-6);
        assert!((vals[1] - 2.0).abs() < 1e-6);
    }
}
