use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used by the numerical modules.
///
/// Tolerances that depend on the precision of the type are associated
/// constants so that `f32` models do not chase `f64` thresholds.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + ScalarOperand
    + LinalgScalar
    + 'static
{
    /// Off-diagonal magnitude (relative to max(1, ‖S‖_F)) at which Jacobi sweeps stop.
    const JACOBI_TOL: f64;
    /// Accepted asymmetry |S_ij − S_ji| (relative to max(1, max|S|)).
    const SYMMETRY_TOL: f64;

    /// Converts an `f64` literal or value. Never fails for finite inputs.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::of(v as f64)
    }
}

impl Scalar for f64 {
    const JACOBI_TOL: f64 = 1e-12;
    const SYMMETRY_TOL: f64 = 1e-9;
}

impl Scalar for f32 {
    const JACOBI_TOL: f64 = 1e-6;
    const SYMMETRY_TOL: f64 = 1e-5;
}
