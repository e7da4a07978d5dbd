use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};

/// Scalar type for all model arithmetic: `f32` or `f64`.
///
/// The sampling methods expose the exact distribution draws needed by the
/// jump drivers without leaking `rand_distr` bounds into every generic
/// signature.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Draw from Gamma(shape, scale). Exact in distribution.
    fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self;

    /// Draw a Poisson count with the given mean.
    fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: Self) -> u64;

    /// Draw from Exp(rate).
    fn sample_exp<R: Rng + ?Sized>(rng: &mut R, rate: Self) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self {
                Gamma::new(shape, scale)
                    .expect("gamma parameters validated upstream")
                    .sample(rng)
            }

            fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: Self) -> u64 {
                let n: $t = Poisson::new(mean)
                    .expect("poisson mean validated upstream")
                    .sample(rng);
                n as u64
            }

            fn sample_exp<R: Rng + ?Sized>(rng: &mut R, rate: Self) -> Self {
                Exp::new(rate)
                    .expect("exponential rate validated upstream")
                    .sample(rng)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Convert an `f64` configuration value into the working scalar type.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 converts to scalar")
}

/// Convert a sample count into the working scalar type.
#[inline]
pub fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("usize converts to scalar")
}
