use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::client::{ClientCounters, TxnRecord};
use crate::middlebox::SwitchMode;
use crate::netsim::Micros;

/// One CSV row: the metrics of one (sweep point, mode) run.
///
/// `committed`, throughput, latencies and `switch_commits` cover logical
/// transactions that committed after the warm-up; the attempt and abort
/// counters cover the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment: String,
    pub mode: SwitchMode,
    pub workload: String,
    pub axis: String,
    pub value: Option<f64>,
    pub clients: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub committed: u64,
    pub committed_txn_per_sec: f64,
    pub mean_commit_latency_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub aborts_by_switch: u64,
    pub aborts_by_store: u64,
    pub submitted: u64,
    pub oks: u64,
    pub in_flight: u64,
    pub store_commits: u64,
    pub switch_commits: u64,
    pub mean_attempts: f64,
    /// `attempts:count` pairs separated by `;`.
    pub attempts_hist: String,
    /// Virtual seconds until the n-th commit (motivation runs only).
    pub completion_s: Option<f64>,
    pub trace_hash: String,
    #[serde(skip)]
    pub latencies_us: Vec<Micros>,
}

impl MetricsRecord {
    /// Named numeric column, for trend checks.
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "throughput" | "committed_txn_per_sec" => self.committed_txn_per_sec,
            "mean_latency" | "mean_commit_latency_ms" => self.mean_commit_latency_ms,
            "p50" | "p50_ms" => self.p50_ms,
            "p90" | "p90_ms" => self.p90_ms,
            "p99" | "p99_ms" => self.p99_ms,
            "committed" => self.committed as f64,
            "aborts_by_switch" => self.aborts_by_switch as f64,
            "aborts_by_store" => self.aborts_by_store as f64,
            "store_commits" => self.store_commits as f64,
            "switch_commits" => self.switch_commits as f64,
            "mean_attempts" => self.mean_attempts,
            "completion_s" => self.completion_s?,
            _ => return None,
        })
    }
}

/// Raw outputs of one simulated run.
pub struct RunData<'a> {
    pub txns: &'a [TxnRecord],
    pub counters: ClientCounters,
    pub in_flight: u64,
    pub store_commits: u64,
    pub warmup_us: Micros,
    pub window_end_us: Micros,
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[Micros], p: f64) -> Micros {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn ms(us: Micros) -> f64 {
    us as f64 / 1000.0
}

/// Fills the measured columns of `base`.
pub fn summarize(mut base: MetricsRecord, data: RunData<'_>) -> MetricsRecord {
    let window: Vec<&TxnRecord> = data.txns.iter().filter(|t| t.end >= data.warmup_us && t.end <= data.window_end_us).collect();
    let mut lat: Vec<Micros> = window.iter().map(|t| t.latency()).collect();
    lat.sort_unstable();
    let n = lat.len() as u64;
    let span = data.window_end_us.saturating_sub(data.warmup_us);

    let mut hist: BTreeMap<u32, u64> = BTreeMap::new();
    for t in &window {
        *hist.entry(t.attempts).or_default() += 1;
    }

    base.committed = n;
    base.committed_txn_per_sec = if span == 0 { 0.0 } else { n as f64 / (span as f64 / 1e6) };
    base.mean_commit_latency_ms = if n == 0 { 0.0 } else { ms(lat.iter().sum::<Micros>()) / n as f64 };
    base.p50_ms = ms(percentile(&lat, 0.50));
    base.p90_ms = ms(percentile(&lat, 0.90));
    base.p99_ms = ms(percentile(&lat, 0.99));
    base.aborts_by_switch = data.counters.switch_aborts;
    base.aborts_by_store = data.counters.store_aborts;
    base.submitted = data.counters.submitted;
    base.oks = data.counters.oks;
    base.in_flight = data.in_flight;
    base.store_commits = data.store_commits;
    base.switch_commits = window.iter().filter(|t| t.by_switch).count() as u64;
    base.mean_attempts = if n == 0 { 0.0 } else { window.iter().map(|t| t.attempts as u64).sum::<u64>() as f64 / n as f64 };
    base.attempts_hist = hist.iter().map(|(a, c)| format!("{a}:{c}")).collect::<Vec<_>>().join(";");
    base.latencies_us = lat;
    base
}

pub fn write_csv<W: io::Write>(records: &[MetricsRecord], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.flush()
}

pub fn emit_csv(records: &[MetricsRecord], path: &Path) -> io::Result<()> {
    write_csv(records, std::fs::File::create(path)?)
}

pub fn read_csv(path: &Path) -> io::Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(io::Error::other)?;
    r.deserialize().map(|row| row.map_err(io::Error::other)).collect()
}

pub const CDF_HEADER: [&str; 6] = ["experiment", "mode", "axis", "value", "latency_ms", "cdf"];

/// One row per committed transaction, sorted by latency within each run.
pub fn write_cdf<W: io::Write>(records: &[MetricsRecord], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CDF_HEADER).map_err(io::Error::other)?;
    for r in records {
        let n = r.latencies_us.len();
        let value = r.value.map(|v| v.to_string()).unwrap_or_default();
        for (i, &l) in r.latencies_us.iter().enumerate() {
            let fraction = (i + 1) as f64 / n as f64;
            w.write_record([
                r.experiment.as_str(),
                r.mode.as_str(),
                r.axis.as_str(),
                value.as_str(),
                &ms(l).to_string(),
                &fraction.to_string(),
            ])
            .map_err(io::Error::other)?;
        }
    }
    w.flush()
}

pub fn emit_cdf(records: &[MetricsRecord], path: &Path) -> io::Result<()> {
    write_cdf(records, std::fs::File::create(path)?)
}
