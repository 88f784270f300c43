//! Command-line front end: single runs, grid sweeps, expander verification
//! and scaling analysis.
//!
//! Exit codes: 0 on success, 1 when a promised property was violated (or a
//! scaling verdict failed), 2 on usage or configuration errors.

use anyhow::Context;
use basim_harness::adversary::adversary_names;
use basim_harness::config::{parse_grid, AdversarySpec, InputAssignment, RunConfig};
use basim_harness::runner::{execute, run_suite, write_csv, write_records, read_records};
use basim_harness::scaling::scaling_report;
use basim_core::expander;
use basim_core::types::CorruptionMode;
use basim_core::ProtocolKind;
use clap::{Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

const JOBS_ENV: &str = "BASIM_JOBS";

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    RbaTs,
    RbaExp,
    GbaTs,
    GbaExp,
    BaseBa,
}

impl From<ProtocolArg> for ProtocolKind {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::RbaTs => ProtocolKind::RbaTs,
            ProtocolArg::RbaExp => ProtocolKind::RbaExp,
            ProtocolArg::GbaTs => ProtocolKind::GbaTs,
            ProtocolArg::GbaExp => ProtocolKind::GbaExp,
            ProtocolArg::BaseBa => ProtocolKind::BaseBa,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "basim",
    about = "Deterministic simulator for quadratic-communication Byzantine agreement",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single configuration and print its record.
    Run {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        f: u32,
        /// Gossip parameter; required for the exp protocols.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Base-case committee threshold.
        #[arg(long, alias = "M", default_value_t = 4)]
        m: u32,
        #[arg(long, default_value_t = 2)]
        domain: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Strategy name, optionally with parameters: crash:round=2,count=3
        #[arg(long, default_value = "passive")]
        adversary: String,
        /// unanimous:<v> | split | list:v0,v1,...
        #[arg(long, default_value = "unanimous:0")]
        inputs: String,
        /// Admit fault counts beyond the protocol bound (checks are then
        /// recorded, not enforced).
        #[arg(long)]
        allow_over_bound: bool,
        /// Retract a victim's same-round outbox at corruption time.
        #[arg(long)]
        retract_outbox: bool,
        /// Write the full transcript as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand a grid file and run every configuration.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        /// Write one JSON record per run.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Write the flat summary table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Build a gossip graph and report how it verified.
    VerifyExpander {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Subset-enumeration budget for exhaustive verification.
        #[arg(long, default_value_t = expander::DEFAULT_ENUM_BUDGET)]
        budget: u64,
    },
    /// Scaling analysis over a records file.
    Analyze {
        #[arg(long)]
        records: PathBuf,
        /// Restrict to one protocol label.
        #[arg(long)]
        protocol: Option<String>,
        /// Restrict to one adversary label.
        #[arg(long)]
        adversary: Option<String>,
    },
    /// List the adversary strategy library.
    Adversaries,
}

fn init_rayon() {
    if let Ok(jobs) = std::env::var(JOBS_ENV) {
        if let Ok(jobs) = jobs.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_rayon();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            protocol,
            n,
            f,
            epsilon,
            m,
            domain,
            seed,
            adversary,
            inputs,
            allow_over_bound,
            retract_outbox,
            out,
        } => {
            let adversary: AdversarySpec = adversary.parse()?;
            let inputs: InputAssignment = inputs.parse()?;
            let cfg = RunConfig {
                protocol: protocol.into(),
                n,
                f,
                epsilon,
                m,
                domain,
                seed,
                adversary,
                inputs,
                allow_over_bound,
                corruption_mode: if retract_outbox {
                    CorruptionMode::RetractOutbox
                } else {
                    CorruptionMode::OutboxStands
                },
            };
            let started = std::time::Instant::now();
            let output = execute(&cfg)?;
            eprintln!("run finished in {:?}", started.elapsed());
            if let Some(path) = out {
                fs::write(&path, output.transcript.to_jsonl())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            println!("{}", serde_json::to_string_pretty(&output.record)?);
            let ok = output.record.over_bound || output.record.properties_hold();
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Sweep { grid, records, csv } => {
            let text = fs::read_to_string(&grid)
                .with_context(|| format!("reading {}", grid.display()))?;
            let configs = parse_grid(&text)?;
            eprintln!("sweep: {} runs", configs.len());
            let started = std::time::Instant::now();
            let result = run_suite(&configs)?;
            eprintln!("sweep finished in {:?}", started.elapsed());
            if let Some(path) = records {
                let mut buf = Vec::new();
                write_records(&result.records, &mut buf)?;
                fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = csv {
                let mut buf = Vec::new();
                write_csv(&result.records, &mut buf)?;
                fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
            }
            println!(
                "{{\"runs\":{},\"violations\":{}}}",
                result.records.len(),
                result.violations
            );
            Ok(if result.violations == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::VerifyExpander { n, epsilon, seed, budget } => {
            let out = expander::build_with_budget(n, epsilon, seed, budget)?;
            let report = serde_json::json!({
                "n": n,
                "epsilon": epsilon,
                "d": out.graph.degree,
                "max_degree": out.graph.max_degree(),
                "verified": out.verified,
                "retries": out.retries,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { records, protocol, adversary } => {
            let text = fs::read_to_string(&records)
                .with_context(|| format!("reading {}", records.display()))?;
            let mut recs = read_records(&text)?;
            if let Some(p) = protocol {
                recs.retain(|r| r.protocol == p);
            }
            if let Some(a) = adversary {
                recs.retain(|r| r.adversary == a);
            }
            let report = scaling_report(&recs)?;
            print!("{report}");
            Ok(if report.all_consistent() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Adversaries => {
            for name in adversary_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
