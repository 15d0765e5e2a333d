use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the network core is generic over.
///
/// Training runs in `f32`; gradient checks and other oracles run in `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Send + Sync + 'static
{
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
}

#[inline]
pub fn softplus<F: Real>(x: F) -> F {
    // log(1 + e^x) without overflow for large x.
    if x > F::lit(30.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Inverse of [`softplus`], for initialising `rho` from a target sigma.
pub fn softplus_inv(y: f64) -> f64 {
    y.exp_m1().ln()
}
