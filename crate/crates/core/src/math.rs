//! Scalar primitives shared by every model in the crate.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn sqrt(x: f64) -> f64 {
    x.sqrt()
}

#[cfg(not(feature = "std"))]
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Piecewise-linear value-coupling function `g`.
///
/// Both variants have `g'' = 0` away from the kink, which is what lets the
/// posterior precision update drop its curvature term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    LeakyRelu { slope: f64 },
}

impl ActivationKind {
    pub const fn leaky() -> Self {
        ActivationKind::LeakyRelu { slope: 0.01 }
    }

    pub fn leaky_with(slope: f64) -> Result<Self> {
        if slope > 0.0 && slope < 1.0 {
            Ok(ActivationKind::LeakyRelu { slope })
        } else {
            Err(invalid("leaky ReLU slope must lie in (0, 1)"))
        }
    }

    /// Slope of the negative branch (0 for plain ReLU).
    #[inline]
    pub fn slope(self) -> f64 {
        match self {
            ActivationKind::Relu => 0.0,
            ActivationKind::LeakyRelu { slope } => slope,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        activation(self, x)
    }

    #[inline]
    pub fn deriv(self, x: f64) -> f64 {
        activation_deriv(self, x)
    }
}

impl Default for ActivationKind {
    fn default() -> Self {
        Self::leaky()
    }
}

#[inline]
pub fn activation(g: ActivationKind, x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        g.slope() * x
    }
}

/// First derivative of `g`. The kink at zero takes the positive-branch value 1.
#[inline]
pub fn activation_deriv(g: ActivationKind, x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        g.slope()
    }
}

/// Logistic sigmoid, evaluated on the branch that never overflows `exp`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(exp(-x))
    } else {
        libm::log1p(exp(x))
    }
}

/// One draw from `N(0, 2 / fan_in)`.
pub fn he_init(fan_in: usize, rng: &mut Rng) -> Result<f64> {
    if fan_in == 0 {
        return Err(invalid("he_init: fan_in must be at least 1"));
    }
    Ok(rng.normal() * sqrt(2.0 / fan_in as f64))
}

/// Deterministic, splittable random number generator.
///
/// Backed by ChaCha8: the 64-bit seed picks the key and [`Rng::stream`] picks
/// one of 2^64 independent streams, so `(experiment, seed, layer)` style paths
/// fan out without any shared state.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Generator for the stream addressed by `path` under `seed`.
    pub fn stream(seed: u64, path: &[u64]) -> Self {
        let id = path.iter().fold(0x5EED_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)));
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id);
        Rng { seed, inner }
    }

    /// Child generator derived from this generator's seed and `tag`; does not
    /// advance `self`.
    pub fn fork(&self, tag: u64) -> Self {
        Rng::stream(self.seed, &[self.inner.get_stream(), tag])
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::Rng;
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    const LEAKY: ActivationKind = ActivationKind::LeakyRelu { slope: 0.01 };

    #[test]
    fn activation_examples() {
        assert_eq!(activation(LEAKY, -2.0), -0.02);
        assert_eq!(activation(LEAKY, 3.0), 3.0);
        assert_eq!(activation(ActivationKind::Relu, -5.0), 0.0);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(activation_deriv(LEAKY, -1.0), 0.01);
        assert_eq!(activation_deriv(LEAKY, 0.0), 1.0);
        assert_eq!(activation_deriv(ActivationKind::Relu, 2.0), 1.0);
        assert_eq!(activation_deriv(ActivationKind::Relu, -2.0), 0.0);
    }

    #[test]
    fn slope_validation() {
        assert!(ActivationKind::leaky_with(0.2).is_ok());
        assert!(ActivationKind::leaky_with(0.0).is_err());
        assert!(ActivationKind::leaky_with(1.0).is_err());
    }

    #[test]
    fn sigmoid_saturation() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-15);
        let lo = sigmoid(-40.0);
        assert!(lo > 0.0 && lo < 1e-15);
    }

    #[test]
    fn he_init_rejects_zero_fan_in() {
        assert!(he_init(0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn he_init_variance_and_mean() {
        let n = 1_000_000;
        let mut rng = Rng::new(7);
        let xs: Vec<f64> = (0..n).map(|_| he_init(2, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
        // sd of the sample variance of a normal is sigma^2 * sqrt(2 / n)
        assert!((var - 1.0).abs() < 2.576 * (2.0 / n as f64).sqrt());

        let mut rng = Rng::new(8);
        let m = (0..n).map(|_| he_init(8, &mut rng).unwrap()).sum::<f64>() / n as f64;
        let sd_of_mean = (2.0 / 8.0f64).sqrt() / (n as f64).sqrt();
        assert!(m.abs() < 3.0 * sd_of_mean, "mean {m}");
    }

    #[test]
    fn rng_determinism_and_streams() {
        let a: Vec<u64> = {
            let mut r = Rng::new(42);
            (0..16).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Rng::new(42);
            (0..16).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        let mut s1 = Rng::stream(42, &[1, 2]);
        let mut s2 = Rng::stream(42, &[1, 3]);
        assert_ne!(s1.next_u64(), s2.next_u64());
        let mut s3 = Rng::stream(42, &[1, 2]);
        let mut s1b = Rng::stream(42, &[1, 2]);
        assert_eq!(s3.next_u64(), s1b.next_u64());
    }

    proptest! {
        #[test]
        fn derivative_matches_finite_difference(x in prop_oneof![-50.0f64..-1e-3, 1e-3f64..50.0]) {
            for g in [LEAKY, ActivationKind::Relu] {
                let h = 1e-7 * x.abs().max(1e-3);
                let fd = (activation(g, x + h) - activation(g, x - h)) / (2.0 * h);
                let d = activation_deriv(g, x);
                if d == 0.0 {
                    prop_assert!(fd.abs() < 1e-12);
                } else {
                    prop_assert!(((fd - d) / d).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn sigmoid_symmetry(x in -30.0f64..30.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        }
    }
}
