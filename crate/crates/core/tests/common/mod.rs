#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use gotthard::bench::{ExperimentConfig, WorkloadSpec};
use gotthard::store::{CommitRecord, StoreState};
use gotthard::wire::{Key, Value};
use gotthard::workloads::MicroConfig;

pub fn experiments_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../experiments")
}

pub fn experiment(name: &str) -> ExperimentConfig {
    let path = experiments_dir().join(format!("{name}.toml"));
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Applies committed writes in log order, independently of the store.
pub fn replay(initial: &BTreeMap<Key, Value>, log: &[CommitRecord]) -> BTreeMap<Key, Value> {
    let mut data = initial.clone();
    for rec in log {
        for &(k, v) in &rec.writes {
            data.insert(k, v);
        }
    }
    data
}

/// Keys that differ between the store and its replayed log. Absent keys on
/// either side count as zero.
pub fn replay_mismatches(store: &StoreState) -> Vec<Key> {
    let expected = replay(store.initial(), store.commit_log());
    let actual = store.snapshot();
    let mut keys: Vec<Key> = expected.keys().chain(actual.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .filter(|k| expected.get(k).copied().unwrap_or(Value::ZERO) != actual.get(k).copied().unwrap_or(Value::ZERO))
        .collect()
}

/// Incrementing clients on one counter.
pub fn counter_experiment(clients: usize, seed: u64, duration_s: f64) -> ExperimentConfig {
    ExperimentConfig {
        name: "counter".into(),
        duration_s,
        warmup_s: 0.0,
        workload: WorkloadSpec::Micro(MicroConfig {
            num_clients: clients,
            write_fraction: 1.0,
            num_keys: 1,
            seed,
            ..MicroConfig::default()
        }),
        ..ExperimentConfig::default()
    }
}
