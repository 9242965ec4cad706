use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use gotthard::bench::{
    check_trends, emit_cdf, emit_csv, motivation_run, read_csv, run_experiment, write_csv, AssertionFile, ExperimentConfig,
    MetricsRecord, MotivationConfig,
};
use gotthard::middlebox::SwitchMode;

#[derive(Parser)]
#[command(name = "bench", about = "Run simulated experiments and check their trends")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every sweep point and mode of an experiment file.
    Run {
        config: PathBuf,
        /// Metrics CSV (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Latency CDF CSV.
        #[arg(long)]
        cdf: Option<PathBuf>,
        /// Evaluate these assertions against the fresh records.
        #[arg(long)]
        check: Option<PathBuf>,
        /// Run points on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Completion time of N transactions per write fraction and mode.
    Motivation {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5])]
        write_fractions: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        transactions: u64,
        #[arg(long, default_value_t = 8)]
        clients: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate assertions against metrics CSVs; exits non-zero on failure.
    Check {
        assertions: PathBuf,
        #[arg(long = "records", required = true, num_args = 1..)]
        records: Vec<PathBuf>,
    },
}

fn output(records: &[MetricsRecord], out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(p) => emit_csv(records, p).with_context(|| format!("writing {}", p.display())),
        None => Ok(write_csv(records, std::io::stdout().lock())?),
    }
}

fn check(assertions: &Path, records: &[MetricsRecord]) -> anyhow::Result<bool> {
    let file = AssertionFile::load(assertions).with_context(|| format!("reading {}", assertions.display()))?;
    let report = check_trends(records, &file);
    eprint!("{report}");
    Ok(report.all_passed())
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let ok = match cli.cmd {
        Cmd::Run { config, out, cdf, check: assertions, parallel } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.parallel |= parallel;
            let records = run_experiment(&cfg)?;
            output(&records, out.as_ref())?;
            if let Some(p) = cdf {
                emit_cdf(&records, &p).with_context(|| format!("writing {}", p.display()))?;
            }
            match assertions {
                Some(a) => check(&a, &records)?,
                None => true,
            }
        }
        Cmd::Motivation { write_fractions, transactions, clients, seed, out } => {
            let cfg = MotivationConfig { transactions, num_clients: clients, seed, ..MotivationConfig::default() };
            let mut records = Vec::new();
            for &wf in &write_fractions {
                for mode in SwitchMode::ALL {
                    let r = motivation_run(&cfg, wf, mode)?;
                    eprintln!(
                        "writes={wf:<5} {:<10} completion={}",
                        mode.as_str(),
                        r.completion_s.map(|c| format!("{c:.3}s")).unwrap_or_else(|| "timeout".into())
                    );
                    records.push(r);
                }
            }
            output(&records, out.as_ref())?;
            true
        }
        Cmd::Check { assertions, records } => {
            let mut all = Vec::new();
            for p in &records {
                all.extend(read_csv(p).with_context(|| format!("reading {}", p.display()))?);
            }
            check(&assertions, &all)?
        }
    };
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
