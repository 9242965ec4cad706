use rand::Rng;

use crate::wire::Key;

/// Draws keys with P(rank r) proportional to r^-s; s = 0 is uniform.
#[derive(Debug, Clone)]
pub struct ZipfSampler {
    exponent: f64,
    keys: Vec<Key>,
    cdf: Vec<f64>,
}

impl ZipfSampler {
    /// `keys[0]` is rank 1.
    pub fn new(keys: Vec<Key>, exponent: f64) -> Self {
        assert!(!keys.is_empty(), "need at least one key");
        assert!(exponent >= 0.0 && exponent.is_finite(), "zipf exponent must be >= 0");
        let weights: Vec<f64> = (1..=keys.len()).map(|r| (r as f64).powf(-exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        *cdf.last_mut().expect("non-empty") = 1.0;
        ZipfSampler { exponent, keys, cdf }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    /// Probability of the key at 1-based `rank`.
    pub fn probability(&self, rank: usize) -> f64 {
        let hi = self.cdf[rank - 1];
        let lo = if rank == 1 { 0.0 } else { self.cdf[rank - 2] };
        hi - lo
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Key {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.keys.len() - 1);
        self.keys[idx]
    }
}
