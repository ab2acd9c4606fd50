use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Element type the model runs in: f32 for training, f64 for gradient audits.
pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    /// Widening conversion (named to avoid `ToPrimitive::to_f64`).
    fn as_f64(self) -> f64;
    fn sample_standard_normal<R: Rng>(rng: &mut R) -> Self;

    /// GeLU, tanh approximation: `0.5·x·(1 + tanh(√(2/π)(x + 0.044715x³)))`.
    fn gelu(self) -> Self {
        let half = Self::from_f64(0.5);
        let one = Self::one();
        half * self * (one + Self::gelu_inner(self).tanh())
    }

    /// Derivative of the tanh-approximation GeLU.
    fn gelu_prime(self) -> Self {
        let half = Self::from_f64(0.5);
        let one = Self::one();
        let t = Self::gelu_inner(self).tanh();
        let sech2 = one - t * t;
        let du = Self::from_f64((2.0 / std::f64::consts::PI).sqrt())
            * (one + Self::from_f64(3.0 * 0.044715) * self * self);
        half * (one + t) + half * self * sech2 * du
    }

    #[doc(hidden)]
    fn gelu_inner(self) -> Self {
        Self::from_f64((2.0 / std::f64::consts::PI).sqrt())
            * (self + Self::from_f64(0.044715) * self * self * self)
    }
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
    fn sample_standard_normal<R: Rng>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn sample_standard_normal<R: Rng>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}
