//! Workload generators: the counter microbenchmark and a scaled-down TPC-C.

pub mod micro;
pub mod tpcc;
mod zipf;

pub use micro::{client_seed, ConfigError, MicroConfig, MicroWorkload};
pub use zipf::ZipfSampler;
