//! Seeded parameter initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::element::Element;

/// The generator used for every seeded draw in the workspace.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` draws from `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub fn uniform_fan_in<T: Element>(n: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    (0..n)
        .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_and_reproducible() {
        let a: Vec<f64> = uniform_fan_in(1000, 24, &mut seeded_rng(3));
        let b: Vec<f64> = uniform_fan_in(1000, 24, &mut seeded_rng(3));
        assert_eq!(a, b);
        let bound = 0.5;
        assert!(a.iter().all(|v| v.abs() < bound));
        assert!(a.iter().any(|v| v.abs() > 0.4));
    }
}
