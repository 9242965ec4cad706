//! Counter microbenchmark: single-key reads and increments.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ZipfSampler;
use crate::client::{Increment, ReadKey, TxnProgram, Workload};
use crate::wire::{Key, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("write_fraction {0} outside [0, 1]")]
    WriteFraction(f64),
    #[error("zipf_exponent {0} must be >= 0")]
    ZipfExponent(f64),
    #[error("locality {0} outside [0.5, 1]")]
    Locality(f64),
    #[error("num_keys must be positive")]
    NoKeys,
    #[error("locality runs need an even num_keys, got {0}")]
    OddKeys(usize),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroConfig {
    pub num_clients: usize,
    pub write_fraction: f64,
    pub num_keys: usize,
    pub zipf_exponent: f64,
    /// Fraction of each group's clients that stay on their own key set.
    pub locality: f64,
    pub seed: u64,
}

impl Default for MicroConfig {
    fn default() -> Self {
        MicroConfig {
            num_clients: 8,
            write_fraction: 0.2,
            num_keys: 10,
            zipf_exponent: 0.0,
            locality: 1.0,
            seed: 1,
        }
    }
}

impl MicroConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.write_fraction) {
            return Err(ConfigError::WriteFraction(self.write_fraction));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(ConfigError::ZipfExponent(self.zipf_exponent));
        }
        if !(0.5..=1.0).contains(&self.locality) {
            return Err(ConfigError::Locality(self.locality));
        }
        if self.num_keys == 0 {
            return Err(ConfigError::NoKeys);
        }
        Ok(())
    }

    pub fn keys(&self) -> Vec<Key> {
        (0..self.num_keys as Key).collect()
    }

    /// Every counter starts at zero.
    pub fn population(&self) -> Vec<(Key, Value)> {
        self.keys().into_iter().map(|k| (k, Value::from_counter(0))).collect()
    }

    /// Key set for one client of the two-group locality layout. Keys are split
    /// in halves, one per group; the first `round((1 - locality) * per_group)`
    /// clients of each group draw from the other group's half.
    pub fn locality_keys(&self, group: usize, index_in_group: usize, per_group: usize) -> Result<Vec<Key>, ConfigError> {
        if !self.num_keys.is_multiple_of(2) {
            return Err(ConfigError::OddKeys(self.num_keys));
        }
        let remote = ((1.0 - self.locality) * per_group as f64).round() as usize;
        let set = if index_in_group < remote { 1 - group } else { group };
        let half = self.num_keys / 2;
        Ok((set * half..(set + 1) * half).map(|k| k as Key).collect())
    }
}

/// Per-client generator: writes with probability `write_fraction`, keys by Zipf rank.
#[derive(Debug, Clone)]
pub struct MicroWorkload {
    write_fraction: f64,
    sampler: ZipfSampler,
}

impl MicroWorkload {
    pub fn new(cfg: &MicroConfig, keys: Vec<Key>) -> Self {
        MicroWorkload { write_fraction: cfg.write_fraction, sampler: ZipfSampler::new(keys, cfg.zipf_exponent) }
    }

    pub fn next_micro_txn(&mut self, rng: &mut ChaCha8Rng) -> Box<dyn TxnProgram> {
        let write = rng.gen_bool(self.write_fraction);
        let key = self.sampler.sample(rng);
        if write {
            Box::new(Increment { key })
        } else {
            Box::new(ReadKey { key })
        }
    }
}

impl Workload for MicroWorkload {
    fn next_program(&mut self, rng: &mut ChaCha8Rng) -> Box<dyn TxnProgram> {
        self.next_micro_txn(rng)
    }
}

/// Per-client seed derived from the run seed.
pub fn client_seed(seed: u64, client_id: u32) -> u64 {
    seed ^ client_id as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn read_only_mix() {
        let cfg = MicroConfig { write_fraction: 0.0, ..MicroConfig::default() };
        let mut w = MicroWorkload::new(&cfg, cfg.keys());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(w.next_micro_txn(&mut rng).label(), "read");
        }
    }

    #[test]
    fn write_fraction_is_respected() {
        let cfg = MicroConfig { write_fraction: 0.3, ..MicroConfig::default() };
        let mut w = MicroWorkload::new(&cfg, cfg.keys());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let writes = (0..100_000).filter(|_| w.next_micro_txn(&mut rng).label() == "increment").count();
        assert!((writes as f64 / 100_000.0 - 0.3).abs() < 0.01);
    }

    #[test]
    fn validation() {
        assert!(MicroConfig::default().validate().is_ok());
        let bad = MicroConfig { write_fraction: 1.2, ..MicroConfig::default() };
        assert_eq!(bad.validate(), Err(ConfigError::WriteFraction(1.2)));
        let bad = MicroConfig { locality: 0.4, ..MicroConfig::default() };
        assert_eq!(bad.validate(), Err(ConfigError::Locality(0.4)));
        let bad = MicroConfig { zipf_exponent: -1.0, ..MicroConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn locality_assignment() {
        let cfg = MicroConfig { locality: 0.625, ..MicroConfig::default() };
        let sets: Vec<Vec<Key>> = (0..8).map(|i| cfg.locality_keys(0, i, 8).unwrap()).collect();
        let remote = sets.iter().filter(|s| s[0] == 5).count();
        assert_eq!(remote, 3);
        assert_eq!(cfg.locality_keys(1, 7, 8).unwrap(), vec![5, 6, 7, 8, 9]);
        let full = MicroConfig::default();
        assert!((0..8).all(|i| full.locality_keys(1, i, 8).unwrap()[0] == 5));
        let half = MicroConfig { locality: 0.5, ..MicroConfig::default() };
        assert_eq!((0..8).filter(|&i| half.locality_keys(0, i, 8).unwrap()[0] == 5).count(), 4);
    }
}
