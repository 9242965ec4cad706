use std::thread;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentError, WorkloadSpec};
use super::metrics::{summarize, MetricsRecord, RunData};
use crate::client::{ClientNode, ClientState};
use crate::middlebox::{Middlebox, SwitchMode, SwitchNode};
use crate::netsim::{Handler, Micros, NodeId, NodeKind, Outbox, RunSummary, Simulator, Topology};
use crate::store::{StoreNode, StoreState};
use crate::workloads::client_seed;

/// Any node of a simulated deployment.
pub enum SimNode {
    Client(Box<ClientNode<NodeId>>),
    Switch(SwitchNode<NodeId>),
    Store(StoreNode<NodeId>),
}

impl SimNode {
    pub fn as_client(&self) -> Option<&ClientNode<NodeId>> {
        match self {
            SimNode::Client(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_switch(&self) -> Option<&SwitchNode<NodeId>> {
        match self {
            SimNode::Switch(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_store(&self) -> Option<&StoreNode<NodeId>> {
        match self {
            SimNode::Store(s) => Some(s),
            _ => None,
        }
    }
}

impl Handler<NodeId> for SimNode {
    fn on_start(&mut self, now: Micros, out: &mut Outbox<NodeId>) {
        match self {
            SimNode::Client(c) => c.on_start(now, out),
            SimNode::Switch(s) => s.on_start(now, out),
            SimNode::Store(s) => s.on_start(now, out),
        }
    }

    fn on_datagram(&mut self, now: Micros, from: NodeId, bytes: &[u8], out: &mut Outbox<NodeId>) {
        match self {
            SimNode::Client(c) => c.on_datagram(now, from, bytes, out),
            SimNode::Switch(s) => s.on_datagram(now, from, bytes, out),
            SimNode::Store(s) => s.on_datagram(now, from, bytes, out),
        }
    }

    fn on_timer(&mut self, now: Micros, token: u64, out: &mut Outbox<NodeId>) {
        match self {
            SimNode::Client(c) => c.on_timer(now, token, out),
            SimNode::Switch(s) => s.on_timer(now, token, out),
            SimNode::Store(s) => s.on_timer(now, token, out),
        }
    }

    fn is_active(&self) -> bool {
        match self {
            SimNode::Client(c) => c.is_active(),
            SimNode::Switch(s) => s.is_active(),
            SimNode::Store(s) => s.is_active(),
        }
    }
}

/// A ready-to-run simulation of one configuration point.
pub struct Deployment {
    pub sim: Simulator<SimNode>,
    pub mode: SwitchMode,
}

impl Deployment {
    /// `budget` caps the logical transactions of each client.
    pub fn build(cfg: &ExperimentConfig, mode: SwitchMode, budget: Option<u64>) -> Result<Self, ExperimentError> {
        let topology = cfg.build_topology()?;
        let seed = cfg.workload.seed();

        let groups: Vec<usize> = (0..topology.clients().len()).map(|i| topology.client_group(i)).collect();
        let (population, workloads) = cfg.workload.instantiate(cfg.topology, &groups)?;
        let mut store = StoreState::new();
        store.populate(population).map_err(|e| ExperimentError::Invalid(e.to_string()))?;

        let mut workloads = workloads.into_iter();
        let mut store = Some(store);
        let mut nodes = Vec::with_capacity(topology.len());
        let mut service = Vec::with_capacity(topology.len());
        let mut client_index = 0u32;
        for id in 0..topology.len() {
            let up = topology.upstream(id);
            match topology.kind(id) {
                NodeKind::Store => {
                    nodes.push(SimNode::Store(StoreNode::new(store.take().expect("one store"))));
                    service.push(cfg.store_service_us);
                }
                NodeKind::Switch => {
                    let mode = if topology.is_edge(id) { mode } else { cfg.middle_mode };
                    let mb = Middlebox::new(mode, cfg.cache_capacity).with_fill_misses(cfg.fill_misses);
                    nodes.push(SimNode::Switch(SwitchNode::new(mb, up.expect("switch has an upstream"))));
                    service.push(cfg.switch_service_us);
                }
                NodeKind::Client => {
                    let state = ClientState::new(client_index, client_seed(seed, client_index));
                    let mut node = ClientNode::new(state, up.expect("client has a switch"), workloads.next().expect("one workload per client"));
                    if let Some(b) = budget {
                        node = node.with_budget(b);
                    }
                    nodes.push(SimNode::Client(Box::new(node)));
                    service.push(0);
                    client_index += 1;
                }
            }
        }
        Ok(Deployment { sim: Simulator::new(topology, nodes, service), mode })
    }

    pub fn topology(&self) -> &Topology {
        self.sim.topology()
    }

    pub fn clients(&self) -> impl Iterator<Item = &ClientNode<NodeId>> {
        self.sim.nodes().iter().filter_map(SimNode::as_client)
    }

    pub fn store(&self) -> &StoreState {
        &self.sim.nodes()[self.sim.topology().store()].as_store().expect("node 0 is the store").state
    }

    pub fn switches(&self) -> impl Iterator<Item = &SwitchNode<NodeId>> {
        self.sim.nodes().iter().filter_map(SimNode::as_switch)
    }

    pub fn committed_total(&self) -> usize {
        self.clients().map(|c| c.records().len()).sum()
    }

    /// Collects metrics over `[warmup_us, window_end_us]`.
    pub fn metrics(&self, mut base: MetricsRecord, warmup_us: Micros, window_end_us: Micros, summary: &RunSummary) -> MetricsRecord {
        let mut txns = Vec::new();
        let mut counters = crate::client::ClientCounters::default();
        let mut in_flight = 0;
        for c in self.clients() {
            txns.extend_from_slice(c.records());
            let k = c.counters();
            counters.submitted += k.submitted;
            counters.oks += k.oks;
            counters.switch_aborts += k.switch_aborts;
            counters.store_aborts += k.store_aborts;
            counters.resends += k.resends;
            in_flight += c.in_flight() as u64;
        }
        base.trace_hash = format!("{:016x}", summary.trace_hash);
        summarize(
            base,
            RunData {
                txns: &txns,
                counters,
                in_flight,
                store_commits: self.store().commit_log().len() as u64,
                warmup_us,
                window_end_us,
            },
        )
    }
}

fn secs_to_us(s: f64) -> Micros {
    (s * 1e6).round() as Micros
}

/// Everything a run leaves behind, for metrics and post-hoc checks.
pub struct PointOutcome {
    pub record: MetricsRecord,
    pub summary: RunSummary,
    pub deployment: Deployment,
}

fn base_record(cfg: &ExperimentConfig, axis: &str, value: Option<f64>, mode: SwitchMode) -> MetricsRecord {
    MetricsRecord {
        experiment: cfg.name.clone(),
        mode,
        workload: cfg.workload.name().into(),
        axis: axis.into(),
        value,
        clients: cfg.workload.num_clients(),
        seed: cfg.workload.seed(),
        duration_s: cfg.duration_s,
        warmup_s: cfg.warmup_s,
        committed: 0,
        committed_txn_per_sec: 0.0,
        mean_commit_latency_ms: 0.0,
        p50_ms: 0.0,
        p90_ms: 0.0,
        p99_ms: 0.0,
        aborts_by_switch: 0,
        aborts_by_store: 0,
        submitted: 0,
        oks: 0,
        in_flight: 0,
        store_commits: 0,
        switch_commits: 0,
        mean_attempts: 0.0,
        attempts_hist: String::new(),
        completion_s: None,
        trace_hash: String::new(),
        latencies_us: Vec::new(),
    }
}

/// Runs a single configuration point (its `sweep` is ignored).
pub fn run_point(cfg: &ExperimentConfig, mode: SwitchMode, axis: &str, value: Option<f64>) -> Result<PointOutcome, ExperimentError> {
    let mut deployment = Deployment::build(cfg, mode, None)?;
    let end = secs_to_us(cfg.duration_s);
    let summary = deployment.sim.run(end);
    let record = deployment.metrics(base_record(cfg, axis, value, mode), secs_to_us(cfg.warmup_s), end, &summary);
    Ok(PointOutcome { record, summary, deployment })
}

/// One record per (sweep value, mode), in that order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>, ExperimentError> {
    cfg.validate()?;
    let axis = cfg.sweep.as_ref().map(|s| s.axis.as_str()).unwrap_or("");
    let jobs: Vec<(Option<f64>, ExperimentConfig, SwitchMode)> = cfg
        .points()
        .into_iter()
        .flat_map(|(v, p)| cfg.modes.iter().map(move |&m| (v, p.clone(), m)))
        .collect();
    let run = |(v, p, m): &(Option<f64>, ExperimentConfig, SwitchMode)| run_point(p, *m, axis, *v).map(|o| o.record);
    if cfg.parallel {
        thread::scope(|s| {
            let handles: Vec<_> = jobs.iter().map(|j| s.spawn(move || run(j))).collect();
            handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
        })
    } else {
        jobs.iter().map(run).collect()
    }
}

/// The cache-motivation experiment: contending clients on one counter, each
/// transaction either a read or an increment, timed until `transactions`
/// logical commits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotivationConfig {
    pub transactions: u64,
    pub num_clients: usize,
    pub num_keys: usize,
    pub rtt_ms: f64,
    pub delta: f64,
    pub seed: u64,
    pub store_service_us: u64,
    pub switch_service_us: u64,
    /// Give up after this many virtual seconds.
    pub max_duration_s: f64,
}

impl Default for MotivationConfig {
    fn default() -> Self {
        MotivationConfig {
            transactions: 1000,
            num_clients: 8,
            num_keys: 1,
            rtt_ms: 100.0,
            delta: 0.2,
            seed: 1,
            store_service_us: super::config::DEFAULT_STORE_SERVICE_US,
            switch_service_us: super::config::DEFAULT_SWITCH_SERVICE_US,
            max_duration_s: 3600.0,
        }
    }
}

impl MotivationConfig {
    pub fn experiment(&self, write_fraction: f64) -> ExperimentConfig {
        ExperimentConfig {
            name: "motivation".into(),
            rtt_ms: self.rtt_ms,
            delta: self.delta,
            duration_s: self.max_duration_s,
            warmup_s: 0.0,
            store_service_us: self.store_service_us,
            switch_service_us: self.switch_service_us,
            workload: WorkloadSpec::Micro(crate::workloads::MicroConfig {
                num_clients: self.num_clients,
                write_fraction,
                num_keys: self.num_keys,
                zipf_exponent: 0.0,
                locality: 1.0,
                seed: self.seed,
            }),
            ..ExperimentConfig::default()
        }
    }
}

/// Completion time of the motivation experiment for one mode, reported in
/// `completion_s` (None if the cap was hit first).
pub fn motivation_run(cfg: &MotivationConfig, write_fraction: f64, mode: SwitchMode) -> Result<MetricsRecord, ExperimentError> {
    let exp = cfg.experiment(write_fraction);
    exp.validate()?;
    let mut d = Deployment::build(&exp, mode, None)?;
    let cap = secs_to_us(cfg.max_duration_s);
    let step = 1_000_000;
    let mut t = 0;
    let mut summary;
    loop {
        t = (t + step).min(cap);
        summary = d.sim.run(t);
        if d.committed_total() as u64 >= cfg.transactions || t >= cap {
            break;
        }
    }
    let mut ends: Vec<Micros> = d.clients().flat_map(|c| c.records().iter().map(|r| r.end)).collect();
    ends.sort_unstable();
    let n = cfg.transactions as usize;
    let completion = (n > 0 && ends.len() >= n).then(|| ends[n - 1]);
    let window_end = completion.unwrap_or(t);
    let mut base = base_record(&exp, "write_fraction", Some(write_fraction), mode);
    base.duration_s = window_end as f64 / 1e6;
    let mut rec = d.metrics(base, 0, window_end, &summary);
    rec.completion_s = completion.map(|c| c as f64 / 1e6);
    Ok(rec)
}
