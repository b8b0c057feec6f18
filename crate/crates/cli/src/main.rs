//! `mpo`: run scenarios, audit traces, Monte Carlo grids, sweeps and demos.
//!
//! Exit status is 0 on success or a passing audit, 1 on a failing audit and
//! 2 on bad input.

mod demo;
mod mc;
mod sweep;

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mpo::audit::{audit, AuditConfig, AuditReport};
use mpo::netsim::{run, Scenario, Trace};
use mpo::{ProcessId, Step, Variant};

#[derive(Parser, Debug)]
#[command(name = "mpo", version, about = "Message and packet efficient leader election simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario file and write its trace.
    Run(RunArgs),
    /// Check a trace for convergence and efficiency.
    Audit(AuditArgs),
    /// Monte Carlo estimates for random timely digraphs.
    Mc(mc::McArgs),
    /// Run and audit random dependable scenarios over a grid.
    Sweep(sweep::SweepArgs),
    /// Build, run and audit one random dependable scenario.
    Demo(demo::DemoArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Trace output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "MPO_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    horizon: Option<Step>,
    /// Sender timeout.
    #[arg(long)]
    to: Option<u64>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Report output; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Efficiency cutoff step; defaults to convergence plus ten sender periods.
    #[arg(long)]
    cutoff: Option<Step>,
    /// Steps the final leader must hold before the horizon.
    #[arg(long)]
    window: Option<Step>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantArg {
    Baseline,
    Rebroadcast,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Baseline => Variant::Baseline,
            VariantArg::Rebroadcast => Variant::Rebroadcast,
        }
    }
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// The audit ran and failed.
    Audit,
    /// Bad arguments, unreadable or malformed input.
    Input(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

pub type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Run(a) => cmd_run(&a),
        Command::Audit(a) => cmd_audit(&a),
        Command::Mc(a) => mc::cmd_mc(&a),
        Command::Sweep(a) => sweep::cmd_sweep(&a),
        Command::Demo(a) => demo::cmd_demo(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Audit) => ExitCode::from(1),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_run(a: &RunArgs) -> Outcome {
    let src = fs::read_to_string(&a.scenario)
        .with_context(|| format!("reading {}", a.scenario.display()))?;
    let mut scn = Scenario::from_toml_str(&src).with_context(|| a.scenario.display().to_string())?;
    if let Some(seed) = a.seed {
        scn.seed = seed;
    }
    if let Some(n) = a.n {
        scn.n = n;
    }
    if let Some(h) = a.horizon {
        scn.horizon = h;
    }
    if let Some(to) = a.to {
        scn.timers.sender_timeout = to;
    }
    if let Some(v) = a.variant {
        scn.variant = v.into();
    }
    let trace = run(&scn).map_err(anyhow::Error::from)?;
    write_output(a.out.as_deref(), |w| trace.write_jsonl(w))?;
    Ok(())
}

fn cmd_audit(a: &AuditArgs) -> Outcome {
    let file = fs::File::open(&a.trace).with_context(|| format!("opening {}", a.trace.display()))?;
    let trace = Trace::read_jsonl(BufReader::new(file)).with_context(|| a.trace.display().to_string())?;
    let report = audit(
        &trace,
        &AuditConfig {
            window: a.window,
            cutoff: a.cutoff,
        },
    );
    write_output(a.report.as_deref(), |w| write_json(w, &report))?;
    if a.report.is_some() {
        eprintln!("{}", verdict(&report));
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Audit)
    }
}

/// One-line outcome of an audit.
pub fn verdict(r: &AuditReport) -> String {
    if !r.converged {
        return "fail: NotConverged".to_owned();
    }
    let leader = r.leader.map_or("-".to_owned(), |l| l.to_string());
    let mut problems = Vec::new();
    if !r.message_efficient {
        problems.push(format!("origins after cutoff {}", fmt_ids(&r.origins_after_cutoff)));
    }
    if !r.packet_efficient {
        problems.push(format!(
            "{} packets for one message, bound {}",
            r.max_packets_per_message_after_cutoff, r.packet_bound
        ));
    }
    if problems.is_empty() {
        format!("pass: leader {leader}")
    } else {
        format!("fail: leader {leader}; {}", problems.join("; "))
    }
}

pub fn fmt_ids(ids: &[ProcessId]) -> String {
    let v: Vec<String> = ids.iter().map(ToString::to_string).collect();
    format!("[{}]", v.join(", "))
}

pub fn write_json<W: Write, T: serde::Serialize>(mut w: W, v: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)
}

/// Writes to `path`, or to stdout when there is none.
pub fn write_output(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            let file = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            let mut w = BufWriter::new(file);
            f(&mut w).and_then(|()| w.flush())
                .with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w).map_err(|e| anyhow!("writing stdout: {e}"))
        }
    }
}

/// Parses `a,b,c` into a list.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|e| anyhow!("bad list item {x:?}: {e}"))
        })
        .collect()
}
