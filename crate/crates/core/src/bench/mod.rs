//! Experiment runner: configuration files, simulated runs, metrics CSVs and
//! trend checks.

mod config;
mod metrics;
mod run;
mod trends;

pub use config::{
    ExperimentConfig, ExperimentError, Sweep, SweepAxis, TopologyKind, WorkloadSpec, DEFAULT_DURATION_S,
    DEFAULT_STORE_SERVICE_US, DEFAULT_SWITCH_SERVICE_US, DEFAULT_WARMUP_S,
};
pub use metrics::{emit_cdf, emit_csv, percentile, read_csv, summarize, write_cdf, write_csv, MetricsRecord, RunData, CDF_HEADER};
pub use run::{motivation_run, run_experiment, run_point, Deployment, MotivationConfig, PointOutcome, SimNode};
pub use trends::{check_trends, Assertion, AssertionFile, TrendReport, TrendResult};
