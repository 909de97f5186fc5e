//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point type the linear algebra kernels are generic over.
///
/// Implemented for `f32` and `f64`. Everything that needs an eigen- or
/// Cholesky factorization, a logarithm or a Gaussian draw goes through this
/// bound, so exact/rational scalars are intentionally not supported.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lossy conversion from an `f64` literal or config value.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    /// Tolerance used when validating orthonormality of an `n`-column object.
    fn ortho_tol(n: usize) -> Self {
        let scaled = Self::default_epsilon() * Self::lit(100.0) * Self::from_usize_lossy(n).sqrt();
        scaled.max(Self::lit(1e-10))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ortho_tol_is_tight_for_f64() {
        assert_eq!(f64::ortho_tol(3), 1e-10);
        assert!(f64::ortho_tol(1024) <= 1e-10);
        assert!(f32::ortho_tol(1024) > 1e-6);
    }

    #[test]
    fn lit_roundtrip() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.25).to_f64_lossy(), 0.25);
    }
}
