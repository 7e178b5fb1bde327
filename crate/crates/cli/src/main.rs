use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ddslt::decoder::{decode_curve, Criterion};
use ddslt::experiments::{self, acceptance_bound, parse_grid, BoundInputs, ExperimentSpec};
use ddslt::graph::{generate_connected_rgg, radius_for};
use ddslt::protocol::Policy;
use ddslt::sim::{run_dissemination, SimConfig, StorageSnapshot};
use ddslt::soliton::SolitonKind;

const DEFAULT_C: f64 = SolitonKind::DEFAULT_C;
const DEFAULT_DELTA: f64 = SolitonKind::DEFAULT_DELTA;

#[derive(Debug, Parser)]
#[command(name = "ddslt", version, about = "Distributed LT-code storage over random-walk dissemination")]
struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a connected random geometric graph (JSON).
    GenGraph {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        radius_coeff: f64,
        #[arg(long, default_value_t = 1000)]
        max_retries: u32,
    },
    /// Tabulate a soliton distribution (CSV: degree, pmf, cdf).
    Dist {
        #[arg(long, value_enum, default_value_t = DistKind::Ideal)]
        kind: DistKind,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_C)]
        c: f64,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
    },
    /// Run one dissemination and write the storage snapshot (JSON).
    Simulate {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, value_enum, default_value_t = PolicyArg::Ddslt)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 1)]
        snapshot_every: u64,
        /// Trace CSV path; defaults to `<out>.trace.csv` when --out is set.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Optional JSON-lines log of every receive event.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Estimate decoding probability from a snapshot (CSV: eta, success_prob, trials).
    DecodeEval {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value = "1.0:2.5:0.25")]
        eta_grid: String,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = CriterionArg::Rank)]
        criterion: CriterionArg,
    },
    /// Fraction of nodes that know k versus walk length (CSV: r, c1, fraction_k_reached).
    Fig1 {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, value_delimiter = ',', default_value = "1.5,2.0,2.5")]
        radius_coeffs: Vec<f64>,
        #[arg(long, default_value = "0:5:0.25")]
        c1_grid: String,
    },
    /// Decoding probability versus decoding ratio (CSV: eta, ddslt_prob, ltcds1_prob).
    Fig2 {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value = "1.0:2.5:0.25")]
        eta_grid: String,
        #[arg(long, value_enum, default_value_t = CriterionArg::Rank)]
        criterion: CriterionArg,
    },
    /// Final XOR-count distribution (CSV: degree, ddslt_pmf, ltcds1_pmf, ideal_pmf).
    Fig3 {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
    /// Fulfilled code degrees per round (CSV: step, fraction_fulfilled).
    Fig4 {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
    /// SLEM of the three forwarding tables (CSV: seed, slem_uniform, slem_eq1, slem_eq2).
    Table1 {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, default_value_t = 2.0)]
        radius_coeff: f64,
    },
    /// Code-degree fulfilment bound. With --d prints one value, otherwise
    /// compares it with simulation (CSV: d, bound, empirical).
    Bound {
        #[arg(long)]
        d: Option<usize>,
        /// Walk length.
        #[arg(long = "L")]
        l: Option<u64>,
        /// Sum of all code degrees.
        #[arg(long)]
        sigma_d: Option<u64>,
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
}

#[derive(Debug, Args)]
struct NetArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Number of sources.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 5.0)]
    c1: f64,
    #[arg(long, default_value_t = 2.0)]
    radius_coeff: f64,
    #[arg(long, value_enum, default_value_t = DistKind::Ideal)]
    dist: DistKind,
    #[arg(long, default_value_t = 16)]
    payload_len: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DistKind {
    Ideal,
    Robust,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Ddslt,
    Ltcds1,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CriterionArg {
    Rank,
    Peel,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Ddslt => Policy::Ddslt,
            PolicyArg::Ltcds1 => Policy::Ltcds1,
        }
    }
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Rank => Criterion::Rank,
            CriterionArg::Peel => Criterion::Peel,
        }
    }
}

fn soliton(kind: DistKind, c: f64, delta: f64) -> SolitonKind {
    match kind {
        DistKind::Ideal => SolitonKind::Ideal,
        DistKind::Robust => SolitonKind::Robust { c, delta },
    }
}

impl NetArgs {
    fn config(&self, seed: u64) -> SimConfig {
        SimConfig {
            n: self.n,
            k: self.k,
            c1: self.c1,
            radius_coeff: self.radius_coeff,
            dist: soliton(self.dist, DEFAULT_C, DEFAULT_DELTA),
            payload_len: self.payload_len,
            seed,
            ..SimConfig::default()
        }
    }

    fn spec(&self, seed: u64, seeds: usize) -> ExperimentSpec {
        ExperimentSpec { base: self.config(seed), seeds, ..ExperimentSpec::default() }
    }
}

fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_csv<T: Serialize>(path: Option<&Path>, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(open(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = open(path)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DistRow {
    degree: usize,
    pmf: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct DecodeRow {
    eta: f64,
    success_prob: f64,
    trials: usize,
}

#[derive(Serialize)]
struct BoundCsvRow {
    d: usize,
    bound: f64,
    empirical: f64,
}

#[derive(Serialize)]
struct TraceRow {
    step: u64,
    fraction_k_reached: f64,
    fraction_degree_fulfilled: f64,
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let out = cli.out.as_deref();
    let seed = cli.seed;
    match cli.command {
        Command::GenGraph { n, radius_coeff, max_retries } => {
            let g = generate_connected_rgg(n, radius_for(n, radius_coeff), seed, max_retries)?;
            write_text(out, &g.to_json())
        }
        Command::Dist { kind, k, c, delta } => {
            let dist = soliton(kind, c, delta).distribution(k)?;
            let rows = (1..=k).map(|d| DistRow { degree: d, pmf: dist.pmf()[d - 1], cdf: dist.cdf()[d - 1] });
            write_csv(out, rows)
        }
        Command::Simulate { net, policy, snapshot_every, trace, events } => {
            let cfg = SimConfig {
                policy: policy.into(),
                snapshot_every,
                record_events: events.is_some(),
                ..net.config(seed)
            };
            let run = run_dissemination(&cfg)?;
            write_text(out, &run.snapshot.to_json())?;
            let trace_path = trace.or_else(|| {
                out.map(|p| {
                    let mut s = p.as_os_str().to_owned();
                    s.push(".trace.csv");
                    PathBuf::from(s)
                })
            });
            if let Some(p) = trace_path {
                let rows = run.trace.samples.iter().map(|s| TraceRow {
                    step: s.step,
                    fraction_k_reached: s.fraction_k_reached,
                    fraction_degree_fulfilled: s.fraction_degree_fulfilled,
                });
                write_csv(Some(&p), rows)?;
            }
            if let Some(p) = events {
                let mut w = open(Some(&p))?;
                for e in &run.events {
                    writeln!(w, "{}", serde_json::to_string(e)?)?;
                }
                w.flush()?;
            }
            Ok(())
        }
        Command::DecodeEval { snapshot, eta_grid, trials, criterion } => {
            let text = std::fs::read_to_string(&snapshot)
                .with_context(|| format!("cannot read {}", snapshot.display()))?;
            let snap = StorageSnapshot::from_json(&text)?;
            let etas = parse_grid(&eta_grid)?;
            let curve = decode_curve(&snap, &etas, trials, criterion.into(), seed)?;
            write_csv(
                out,
                curve.iter().map(|p| DecodeRow { eta: p.eta, success_prob: p.probability(), trials: p.trials }),
            )
        }
        Command::Fig1 { net, seeds, radius_coeffs, c1_grid } => {
            let spec = ExperimentSpec {
                radius_coeffs,
                c1_checkpoints: parse_grid(&c1_grid)?,
                ..net.spec(seed, seeds)
            };
            write_csv(out, experiments::run_fig1(&spec)?)
        }
        Command::Fig2 { net, seeds, trials, eta_grid, criterion } => {
            let spec = ExperimentSpec {
                trials,
                etas: parse_grid(&eta_grid)?,
                criterion: criterion.into(),
                ..net.spec(seed, seeds)
            };
            let result = experiments::run_fig2(&spec)?;
            #[derive(Serialize)]
            struct Row {
                eta: f64,
                ddslt_prob: f64,
                ltcds1_prob: f64,
            }
            write_csv(
                out,
                result.rows.iter().map(|r| Row { eta: r.eta, ddslt_prob: r.ddslt_prob, ltcds1_prob: r.ltcds1_prob }),
            )
        }
        Command::Fig3 { net, seeds } => write_csv(out, experiments::run_fig3(&net.spec(seed, seeds))?.rows),
        Command::Fig4 { net, seeds } => write_csv(out, experiments::run_fig4(&net.spec(seed, seeds))?.rows),
        Command::Table1 { n, k, seeds, radius_coeff } => {
            let base = SimConfig { n, k, radius_coeff, seed, ..SimConfig::default() };
            let spec = ExperimentSpec { base, seeds, ..ExperimentSpec::default() };
            write_csv(out, experiments::run_table1(&spec)?.rows)
        }
        Command::Bound { d, l, sigma_d, net, seeds } => match d {
            Some(d) => {
                let (Some(l), Some(sigma_d)) = (l, sigma_d) else {
                    bail!("--d needs --L and --sigma-d");
                };
                let omega = soliton(net.dist, DEFAULT_C, DEFAULT_DELTA).distribution(net.k)?;
                let v = acceptance_bound(&BoundInputs { d_u: d, k: net.k, l, sigma_d, omega: &omega })?;
                write_text(out, &format!("{v:.3}"))
            }
            None => {
                let spec = net.spec(seed, seeds);
                let rows = experiments::run_bound(&spec)?;
                write_csv(out, rows.iter().map(|r| BoundCsvRow { d: r.d, bound: r.bound, empirical: r.empirical }))
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
