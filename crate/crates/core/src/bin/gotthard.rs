use std::fs::File;
use std::io::{self, BufReader};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use gotthard::bench::{ExperimentConfig, TopologyKind, WorkloadSpec};
use gotthard::client::{ClientNode, ClientState};
use gotthard::middlebox::{Middlebox, SwitchMode, SwitchNode, DEFAULT_CACHE_CAPACITY};
use gotthard::netsim::udp::{run_handler, UdpTransport};
use gotthard::netsim::{Handler, Micros, Outbox};
use gotthard::store::{read_population, write_population, StoreNode, StoreState};
use gotthard::workloads::client_seed;
use gotthard::workloads::tpcc::TpccLiteConfig;
use gotthard::workloads::MicroConfig;

#[derive(Parser)]
#[command(name = "gotthard", about = "Store, switch and client daemons over UDP")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve the key-value store.
    Store {
        #[arg(long, default_value = "127.0.0.1:9000")]
        listen: String,
        /// CSV of `key,value` rows, value in hex.
        #[arg(long)]
        populate_file: Option<PathBuf>,
        /// Print commit/abort counts every N seconds (0 disables).
        #[arg(long, default_value_t = 0)]
        stats_interval: u64,
        /// Exit after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run a switch between clients and the store.
    Switch {
        #[arg(long, default_value = "127.0.0.1:9001")]
        listen: String,
        #[arg(long)]
        store_addr: String,
        #[arg(long, default_value = "gotthard")]
        mode: SwitchMode,
        #[arg(long, default_value_t = DEFAULT_CACHE_CAPACITY)]
        cache_capacity: usize,
        /// Learn only from forwarded writes and store aborts.
        #[arg(long)]
        no_fill_misses: bool,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Drive one client against a switch (or the store directly).
    Client {
        #[arg(long)]
        server_addr: String,
        /// `micro`, `tpcc`, or an experiment file whose workload is used.
        #[arg(long, default_value = "micro")]
        workload: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Client index, which also fixes the txn_id prefix.
        #[arg(long, default_value_t = 0)]
        client_id: u32,
        /// Seconds to run.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Stop after this many committed transactions.
        #[arg(long)]
        transactions: Option<u64>,
        /// Resend an unanswered request after this many milliseconds.
        #[arg(long, default_value_t = 1000)]
        resend_ms: u64,
        #[arg(long, default_value = "0.0.0.0:0")]
        bind: String,
        /// Per-transaction CSV report.
        #[arg(long)]
        report_csv: Option<PathBuf>,
    },
    /// Write a workload's initial store contents as a population CSV.
    Populate {
        #[arg(long, default_value = "micro")]
        workload: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(addr: &str) -> anyhow::Result<SocketAddr> {
    addr.to_socket_addrs()?.next().with_context(|| format!("`{addr}` resolves to nothing"))
}

fn deadline(seconds: Option<f64>) -> Option<Duration> {
    seconds.map(Duration::from_secs_f64)
}

fn load_workload(arg: &str) -> anyhow::Result<WorkloadSpec> {
    Ok(match arg {
        "micro" => WorkloadSpec::Micro(MicroConfig::default()),
        "tpcc" => WorkloadSpec::Tpcc(TpccLiteConfig::default()),
        path => ExperimentConfig::load(Path::new(path))?.workload,
    })
}

/// Store node that also reports its counters on a timer.
struct StoreDaemon {
    node: StoreNode<SocketAddr>,
    interval: Micros,
}

impl Handler<SocketAddr> for StoreDaemon {
    fn on_start(&mut self, _now: Micros, out: &mut Outbox<SocketAddr>) {
        if self.interval > 0 {
            out.set_timer(self.interval, 0);
        }
    }

    fn on_datagram(&mut self, now: Micros, from: SocketAddr, bytes: &[u8], out: &mut Outbox<SocketAddr>) {
        self.node.on_datagram(now, from, bytes, out);
    }

    fn on_timer(&mut self, now: Micros, _token: u64, out: &mut Outbox<SocketAddr>) {
        let s = self.node.state.stats();
        eprintln!(
            "t={:.1}s commits={} aborts={} malformed={}",
            now as f64 / 1e6,
            s.commits,
            s.aborts,
            self.node.malformed()
        );
        out.set_timer(self.interval, 0);
    }
}

fn store(listen: &str, populate_file: Option<&Path>, stats_interval: u64, duration: Option<f64>) -> anyhow::Result<()> {
    let mut state = StoreState::new();
    if let Some(path) = populate_file {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let pairs = read_population(BufReader::new(file))?;
        eprintln!("populated {} keys", pairs.len());
        state.populate(pairs)?;
    }
    let transport = UdpTransport::bind(listen)?;
    eprintln!("store listening on {}", transport.local_addr()?);
    let mut daemon = StoreDaemon { node: StoreNode::new(state), interval: stats_interval * 1_000_000 };
    run_handler(&transport, &mut daemon, &AtomicBool::new(false), deadline(duration))?;
    let s = daemon.node.state.stats();
    eprintln!("commits={} aborts={}", s.commits, s.aborts);
    Ok(())
}

fn switch(listen: &str, store_addr: &str, mb: Middlebox, duration: Option<f64>) -> anyhow::Result<()> {
    let transport = UdpTransport::bind(listen)?;
    let mode = mb.mode();
    eprintln!("{mode} switch listening on {}", transport.local_addr()?);
    let mut node = SwitchNode::new(mb, resolve(store_addr)?);
    let send_errors = run_handler(&transport, &mut node, &AtomicBool::new(false), deadline(duration))?;
    let s = node.middlebox.stats();
    eprintln!(
        "requests={} responses={} aborts={} oks={} misses={} malformed={} send_errors={send_errors}",
        s.requests, s.responses, s.aborts, s.oks, s.misses, s.malformed
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn client(
    server: &str,
    workload: &str,
    seed: u64,
    client_id: u32,
    duration: f64,
    transactions: Option<u64>,
    resend_ms: u64,
    bind: &str,
    report: Option<&Path>,
) -> anyhow::Result<()> {
    let spec = load_workload(workload)?;
    let groups = vec![0; client_id as usize + 1];
    let (_, mut workloads) = spec.instantiate(TopologyKind::SingleSwitch, &groups)?;
    let program_source = workloads.pop().expect("one workload per client");
    let state = ClientState::new(client_id, client_seed(seed, client_id));
    let mut node = ClientNode::new(state, resolve(server)?, program_source).with_resend_timeout(resend_ms * 1000);
    if let Some(n) = transactions {
        node = node.with_budget(n);
    }
    let transport = UdpTransport::bind(bind)?;
    let started = Instant::now();
    run_handler(&transport, &mut node, &AtomicBool::new(false), deadline(Some(duration)))?;
    let elapsed = started.elapsed().as_secs_f64();

    let records = node.records();
    let c = node.counters();
    let mean_ms = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.latency()).sum::<Micros>() as f64 / records.len() as f64 / 1000.0
    };
    eprintln!(
        "committed={} txn/s={:.2} mean_latency_ms={mean_ms:.2} switch_aborts={} store_aborts={} resends={}",
        records.len(),
        records.len() as f64 / elapsed,
        c.switch_aborts,
        c.store_aborts,
        c.resends
    );
    if let Some(path) = report {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["label", "start_us", "end_us", "latency_us", "attempts", "fetches", "by_switch"])?;
        for r in records {
            w.write_record([
                r.label.to_string(),
                r.start.to_string(),
                r.end.to_string(),
                r.latency().to_string(),
                r.attempts.to_string(),
                r.fetches.to_string(),
                r.by_switch.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn populate(workload: &str, out: Option<&Path>) -> anyhow::Result<()> {
    let spec = load_workload(workload)?;
    let (pairs, _) = spec.instantiate(TopologyKind::SingleSwitch, &[])?;
    match out {
        Some(path) => write_population(&pairs, File::create(path).with_context(|| format!("creating {}", path.display()))?)?,
        None => write_population(&pairs, io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Store { listen, populate_file, stats_interval, duration } => {
            store(&listen, populate_file.as_deref(), stats_interval, duration)
        }
        Cmd::Switch { listen, store_addr, mode, cache_capacity, no_fill_misses, duration } => {
            if cache_capacity == 0 && mode != SwitchMode::Forward {
                eprintln!("cache capacity 0: {mode} behaves like forward");
            }
            let mb = Middlebox::new(mode, cache_capacity).with_fill_misses(!no_fill_misses);
            switch(&listen, &store_addr, mb, duration)
        }
        Cmd::Client { server_addr, workload, seed, client_id, duration, transactions, resend_ms, bind, report_csv } => {
            if duration <= 0.0 {
                bail!("--duration must be positive");
            }
            client(&server_addr, &workload, seed, client_id, duration, transactions, resend_ms, &bind, report_csv.as_deref())
        }
        Cmd::Populate { workload, out } => populate(&workload, out.as_deref()),
    }
}
