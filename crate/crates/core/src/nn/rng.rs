//! Splittable, counter-based random streams.
//!
//! Every component (each autoencoder, each translator, the data generator)
//! owns its own [`Rng`]. Children are derived from a parent by label, never by
//! drawing from the parent, so the order in which components consume their
//! streams cannot leak into one another:
//!
//! ```text
//! child_seed = splitmix64(parent_seed ^ fnv1a64(label))
//! ```
//!
//! The underlying generator is ChaCha8 seeded from the 64-bit seed.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Tensor;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a64(label: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in label.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream. Depends only on this stream's seed and the
    /// label, not on how many values have been drawn so far.
    pub fn derive(&self, label: &str) -> Rng {
        Rng::new(splitmix64(self.seed ^ fnv1a64(label)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        self.inner.random_range(0..n)
    }

    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn gaussian_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.gaussian()).collect()
    }

    /// I.i.d. standard normal tensor.
    pub fn gaussian_sample(&mut self, shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), self.gaussian_vec(len))
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = Rng::new(42).gaussian_sample(&[64]);
        let b = Rng::new(42).gaussian_sample(&[64]);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn derived_streams_differ() {
        let root = Rng::new(42);
        let mut a = root.derive("ae1");
        let mut b = root.derive("ae2");
        assert_ne!(a.gaussian().to_bits(), b.gaussian().to_bits());
    }

    #[test]
    fn derive_ignores_parent_consumption() {
        let root = Rng::new(7);
        let mut used = root.clone();
        for _ in 0..100 {
            used.gaussian();
        }
        assert_eq!(
            root.derive("x").next_u64(),
            used.derive("x").next_u64()
        );
    }

    #[test]
    fn gaussian_moments() {
        // 3-sigma CLT bounds for n = 1e5: mean +-0.0095, variance +-0.0134.
        let n = 100_000;
        let mut rng = Rng::new(2024);
        let xs = rng.gaussian_vec(n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((0.97..=1.03).contains(&var), "var {var}");
    }

    #[test]
    fn permutation_is_complete() {
        let mut p = Rng::new(1).permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
