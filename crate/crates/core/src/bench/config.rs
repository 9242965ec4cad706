use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::Workload;
use crate::middlebox::{SwitchMode, DEFAULT_CACHE_CAPACITY};
use crate::netsim::TopologyError;
use crate::wire::{Key, Value};
use crate::workloads::tpcc::{tpcc_load, TpccLiteConfig, TpccWorkload};
use crate::workloads::{ConfigError, MicroConfig, MicroWorkload};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config schema: {0}")]
    Schema(#[from] toml::de::Error),
    #[error("workload: {0}")]
    Workload(#[from] ConfigError),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("sweep axis `{axis}` does not apply to the {workload} workload")]
    AxisMismatch { axis: &'static str, workload: &'static str },
    #[error("sweep has no values")]
    EmptySweep,
    #[error("modes list is empty")]
    NoModes,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    SingleSwitch,
    Locality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSpec {
    Micro(MicroConfig),
    Tpcc(TpccLiteConfig),
}

impl WorkloadSpec {
    pub fn name(&self) -> &'static str {
        match self {
            WorkloadSpec::Micro(_) => "micro",
            WorkloadSpec::Tpcc(_) => "tpcc",
        }
    }

    pub fn num_clients(&self) -> usize {
        match self {
            WorkloadSpec::Micro(m) => m.num_clients,
            WorkloadSpec::Tpcc(t) => t.num_clients,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            WorkloadSpec::Micro(m) => m.seed,
            WorkloadSpec::Tpcc(t) => t.seed,
        }
    }

    /// Initial store contents and one workload per client. `groups[i]` is
    /// client `i`'s edge group, used only by the locality topology whose
    /// groups are equal-sized and contiguous.
    #[allow(clippy::type_complexity)]
    pub fn instantiate(
        &self,
        topology: TopologyKind,
        groups: &[usize],
    ) -> Result<(Vec<(Key, Value)>, Vec<Box<dyn Workload>>), ExperimentError> {
        let mut workloads: Vec<Box<dyn Workload>> = Vec::with_capacity(groups.len());
        match self {
            WorkloadSpec::Micro(m) => {
                m.validate()?;
                let per_group = (groups.len() / 2).max(1);
                for (i, &group) in groups.iter().enumerate() {
                    let keys = match topology {
                        TopologyKind::SingleSwitch => m.keys(),
                        TopologyKind::Locality => m.locality_keys(group, i % per_group, per_group)?,
                    };
                    workloads.push(Box::new(MicroWorkload::new(m, keys)));
                }
                Ok((m.population(), workloads))
            }
            WorkloadSpec::Tpcc(t) => {
                t.validate()?;
                let (population, keymap) = tpcc_load(t).map_err(|e| ExperimentError::Invalid(e.to_string()))?;
                for _ in groups {
                    workloads.push(Box::new(TpccWorkload::new(t, keymap)));
                }
                Ok((population, workloads))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Delta,
    RttMs,
    NumClients,
    WriteFraction,
    ZipfExponent,
    Locality,
    Seed,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Delta => "delta",
            SweepAxis::RttMs => "rtt_ms",
            SweepAxis::NumClients => "num_clients",
            SweepAxis::WriteFraction => "write_fraction",
            SweepAxis::ZipfExponent => "zipf_exponent",
            SweepAxis::Locality => "locality",
            SweepAxis::Seed => "seed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// One experiment file: a base configuration, the modes to compare, and at
/// most one sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub modes: Vec<SwitchMode>,
    pub topology: TopologyKind,
    pub rtt_ms: f64,
    pub delta: f64,
    /// Virtual seconds per point.
    pub duration_s: f64,
    /// Commits finishing before this are dropped from the metrics.
    pub warmup_s: f64,
    pub store_service_us: u64,
    pub switch_service_us: u64,
    pub cache_capacity: usize,
    /// Gotthard switches learn uncached keys from store OK responses.
    pub fill_misses: bool,
    /// Mode of switches with no clients attached (the store-side switch of
    /// the locality topology).
    pub middle_mode: SwitchMode,
    /// Run sweep points on separate threads.
    pub parallel: bool,
    pub workload: WorkloadSpec,
    pub sweep: Option<Sweep>,
}

pub const DEFAULT_STORE_SERVICE_US: u64 = 100;
pub const DEFAULT_SWITCH_SERVICE_US: u64 = 10;
pub const DEFAULT_DURATION_S: f64 = 180.0;
pub const DEFAULT_WARMUP_S: f64 = 5.0;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            modes: SwitchMode::ALL.to_vec(),
            topology: TopologyKind::SingleSwitch,
            rtt_ms: 100.0,
            delta: 0.2,
            duration_s: DEFAULT_DURATION_S,
            warmup_s: DEFAULT_WARMUP_S,
            store_service_us: DEFAULT_STORE_SERVICE_US,
            switch_service_us: DEFAULT_SWITCH_SERVICE_US,
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            fill_misses: true,
            middle_mode: SwitchMode::Forward,
            parallel: false,
            workload: WorkloadSpec::Micro(MicroConfig::default()),
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.modes.is_empty() {
            return Err(ExperimentError::NoModes);
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(ExperimentError::Invalid(format!("duration_s {} must be >= 0", self.duration_s)));
        }
        if !(self.warmup_s >= 0.0 && self.warmup_s.is_finite()) {
            return Err(ExperimentError::Invalid(format!("warmup_s {} must be >= 0", self.warmup_s)));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(ExperimentError::EmptySweep);
            }
            let micro_only = matches!(sweep.axis, SweepAxis::WriteFraction | SweepAxis::ZipfExponent | SweepAxis::Locality);
            if micro_only && !matches!(self.workload, WorkloadSpec::Micro(_)) {
                return Err(ExperimentError::AxisMismatch { axis: sweep.axis.as_str(), workload: self.workload.name() });
            }
        }
        for (_, point) in self.points() {
            point.validate_point()?;
        }
        Ok(())
    }

    /// The configuration of every sweep point, in file order, paired with its
    /// sweep value (`None` without a sweep).
    pub fn points(&self) -> Vec<(Option<f64>, ExperimentConfig)> {
        let Some(sweep) = &self.sweep else {
            return vec![(None, ExperimentConfig { sweep: None, ..self.clone() })];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut p = ExperimentConfig { sweep: None, ..self.clone() };
                p.set_axis(sweep.axis, v);
                (Some(v), p)
            })
            .collect()
    }

    fn set_axis(&mut self, axis: SweepAxis, v: f64) {
        match axis {
            SweepAxis::Delta => self.delta = v,
            SweepAxis::RttMs => self.rtt_ms = v,
            SweepAxis::NumClients => match &mut self.workload {
                WorkloadSpec::Micro(m) => m.num_clients = v as usize,
                WorkloadSpec::Tpcc(t) => t.num_clients = v as usize,
            },
            SweepAxis::Seed => match &mut self.workload {
                WorkloadSpec::Micro(m) => m.seed = v as u64,
                WorkloadSpec::Tpcc(t) => t.seed = v as u64,
            },
            SweepAxis::WriteFraction | SweepAxis::ZipfExponent | SweepAxis::Locality => {
                if let WorkloadSpec::Micro(m) = &mut self.workload {
                    match axis {
                        SweepAxis::WriteFraction => m.write_fraction = v,
                        SweepAxis::ZipfExponent => m.zipf_exponent = v,
                        _ => m.locality = v,
                    }
                }
            }
        }
    }

    fn validate_point(&self) -> Result<(), ExperimentError> {
        match &self.workload {
            WorkloadSpec::Micro(m) => m.validate()?,
            WorkloadSpec::Tpcc(t) => t.validate()?,
        }
        let clients = self.workload.num_clients();
        if clients == 0 || clients > 1 << crate::client::CLIENT_ID_BITS {
            return Err(ExperimentError::Invalid(format!("num_clients {clients} outside 1..=256")));
        }
        if self.topology == TopologyKind::Locality {
            if !clients.is_multiple_of(2) {
                return Err(ExperimentError::Invalid(format!("locality topology needs an even num_clients, got {clients}")));
            }
            if let WorkloadSpec::Micro(m) = &self.workload {
                if m.num_keys % 2 != 0 {
                    return Err(ConfigError::OddKeys(m.num_keys).into());
                }
            } else {
                return Err(ExperimentError::Invalid("locality topology runs the micro workload only".into()));
            }
        }
        self.build_topology()?;
        Ok(())
    }

    pub fn build_topology(&self) -> Result<crate::netsim::Topology, TopologyError> {
        let clients = self.workload.num_clients();
        match self.topology {
            TopologyKind::SingleSwitch => crate::netsim::Topology::single_switch(self.rtt_ms, self.delta, clients),
            TopologyKind::Locality => crate::netsim::Topology::locality(self.rtt_ms, self.delta, clients / 2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DELTA_SWEEP: &str = r#"
name = "delta"
modes = ["forward", "gotthard"]
duration_s = 20

[workload]
kind = "micro"
write_fraction = 0.2
num_keys = 10

[sweep]
axis = "delta"
values = [0.0, 0.5, 1.0]
"#;

    #[test]
    fn parses_and_expands_a_sweep() {
        let cfg = ExperimentConfig::from_toml(DELTA_SWEEP).unwrap();
        assert_eq!(cfg.modes, vec![SwitchMode::Forward, SwitchMode::Gotthard]);
        assert_eq!(cfg.rtt_ms, 100.0);
        let points = cfg.points();
        assert_eq!(points.len(), 3);
        assert_eq!(points[2].0, Some(1.0));
        assert_eq!(points[2].1.delta, 1.0);
        assert!(points.iter().all(|(_, p)| p.sweep.is_none()));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(DELTA_SWEEP).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn schema_violations_are_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1"), Err(ExperimentError::Schema(_))));
        assert!(matches!(ExperimentConfig::from_toml("modes = []"), Err(ExperimentError::NoModes)));
        assert!(matches!(
            ExperimentConfig::from_toml("[sweep]\naxis = \"delta\"\nvalues = []"),
            Err(ExperimentError::EmptySweep)
        ));
        assert!(matches!(
            ExperimentConfig::from_toml("[sweep]\naxis = \"delta\"\nvalues = [1.5]"),
            Err(ExperimentError::Topology(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml("[workload]\nkind = \"micro\"\nnum_keys = 10\nwrite_fraction = 2.0"),
            Err(ExperimentError::Workload(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml("[workload]\nkind = \"tpcc\"\n[sweep]\naxis = \"zipf_exponent\"\nvalues = [1.0]"),
            Err(ExperimentError::AxisMismatch { .. })
        ));
        assert!(ExperimentConfig::from_toml("[sweep]\naxis = \"delta\"\nvalues = [0.1]\n[sweep2]").is_err());
    }
}
