use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{invalid, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator: draw `i` is `mix64(seed + (i + 1)·φ)`.
///
/// The whole state is `(seed, counter)`, so a generator can be persisted and
/// resumed exactly, and output does not depend on platform or library versions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rng {
    seed: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn from_state(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    /// Independent stream keyed by `stream`; does not advance `self`.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::new(mix64(self.seed ^ mix64(stream.wrapping_add(GOLDEN))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift; bias is < n / 2^64.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box–Muller (one variate per pair of uniforms).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

/// i.i.d. `N(0, sigma²)` samples of the given shape.
pub fn gaussian(rng: &mut Rng, shape: &[usize], sigma: f64) -> Result<Tensor> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let n: usize = shape.iter().product();
    if sigma == 0.0 {
        return Ok(Tensor::zeros(shape.to_vec()));
    }
    let data = (0..n).map(|_| sigma * rng.normal()).collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_exact_zeros() {
        let mut rng = Rng::new(1);
        let t = gaussian(&mut rng, &[2, 3], 0.0).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_sigma_rejected() {
        let mut rng = Rng::new(1);
        assert!(gaussian(&mut rng, &[2], -0.1).is_err());
        assert!(gaussian(&mut rng, &[2], f64::NAN).is_err());
    }

    #[test]
    fn moments_match_sigma() {
        let mut rng = Rng::new(2024);
        let t = gaussian(&mut rng, &[100_000], 0.3).unwrap();
        let mean = t.mean();
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var.sqrt() - 0.3).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn same_seed_same_tensor() {
        let a = gaussian(&mut Rng::new(99), &[4, 5], 1.0).unwrap();
        let b = gaussian(&mut Rng::new(99), &[4, 5], 1.0).unwrap();
        assert_eq!(a, b);
        let c = gaussian(&mut Rng::new(100), &[4, 5], 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn frozen_stream_values() {
        // First outputs for seed 0 are the canonical SplitMix64 sequence.
        let mut rng = Rng::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn state_resume() {
        let mut a = Rng::new(5);
        for _ in 0..7 {
            a.next_u64();
        }
        let mut b = Rng::from_state(a.seed(), a.counter());
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn forks_are_distinct_and_stable() {
        let base = Rng::new(3);
        let mut f1 = base.fork(1);
        let mut f2 = base.fork(2);
        assert_ne!(f1.next_u64(), f2.next_u64());
        assert_eq!(base.fork(1).next_u64(), Rng::new(3).fork(1).next_u64());
    }

    #[test]
    fn below_and_uniform_ranges() {
        let mut rng = Rng::new(11);
        for _ in 0..1000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u < 1.0);
            assert!(rng.below(7) < 7);
        }
        let mut p = rng.permutation(10);
        p.sort_unstable();
        assert_eq!(p, (0..10).collect::<Vec<_>>());
    }
}
