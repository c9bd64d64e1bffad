//! Scalar abstraction. The whole stack is generic over the floating-point
//! type; `f64` is what the CLI and the test suite use, `f32` works at
//! correspondingly looser tolerances.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Conversion from an `f64` constant (tolerances, literals).
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant must convert to the scalar type")
    }

    /// Widening (or identity) conversion used at serialization boundaries.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
