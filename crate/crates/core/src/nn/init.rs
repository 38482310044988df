//! Seeded random streams and weight initialisation.
//!
//! All randomness flows through [`SeededRng`], ChaCha8 seeded from a `u64`,
//! so streams are identical on every platform.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Glorot (Xavier) uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// I.i.d. samples from `U[-L, L]` with the Glorot bound. Samples are drawn in
/// `f64` and then rounded, so `f32` and `f64` networks built from the same seed
/// start from the same point.
pub fn glorot_uniform_init<T: Scalar>(fan_in: usize, fan_out: usize, shape: &[usize], rng: &mut SeededRng) -> Tensor<T> {
    assert!(fan_in >= 1 && fan_out >= 1, "fan_in and fan_out must be positive");
    let l = glorot_limit(fan_in, fan_out);
    let dist = Uniform::new_inclusive(-l, l).expect("finite glorot bound");
    Tensor::from_fn(shape, |_| T::lit(dist.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_for_three_by_three_is_one() {
        assert_eq!(glorot_limit(3, 3), 1.0);
        let t: Tensor<f32> = glorot_uniform_init(3, 3, &[1000], &mut seeded_rng(7));
        assert!(t.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn same_seed_same_tensor() {
        let a: Tensor<f32> = glorot_uniform_init(8, 4, &[4, 8], &mut seeded_rng(11));
        let b: Tensor<f32> = glorot_uniform_init(8, 4, &[4, 8], &mut seeded_rng(11));
        let c: Tensor<f32> = glorot_uniform_init(8, 4, &[4, 8], &mut seeded_rng(12));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_variance_matches_uniform_law() {
        // Var(U[-L, L]) = L^2 / 3 = 2 / (fan_in + fan_out)
        let t: Tensor<f64> = glorot_uniform_init(48, 48, &[100_000], &mut seeded_rng(3));
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / 96.0;
        assert!((var - expected).abs() / expected < 0.05, "variance {var}");
    }
}
