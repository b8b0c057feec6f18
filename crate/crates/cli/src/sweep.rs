use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::bail;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use mpo::audit::{audit, AuditConfig};
use mpo::netsim::{preset_dependable_with, run, PresetOptions};
use mpo::{ProcessId, Step};

use crate::mc::Format;
use crate::{parse_list, write_json, write_output, Failure, Outcome, VariantArg};

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma-separated process counts.
    #[arg(long)]
    n: String,
    /// Scenarios per process count.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// First seed; seed `s` designates process `s mod n` as leader.
    #[arg(long, env = "MPO_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50_000)]
    horizon: Step,
    /// Crashes per scenario; random up to n/3 when absent.
    #[arg(long)]
    crashes: Option<usize>,
    #[arg(long, value_enum, default_value_t = VariantArg::Baseline)]
    variant: VariantArg,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    /// Fingerprint of the generated scenario.
    pub config_hash: String,
    pub n: usize,
    pub seed: u64,
    pub expected_leader: ProcessId,
    pub crashes: usize,
    pub leader: Option<ProcessId>,
    pub converged: bool,
    pub convergence_step: Option<Step>,
    pub message_efficient: bool,
    pub packet_efficient: bool,
    pub pass: bool,
}

pub fn sweep_cell(n: usize, seed: u64, opts: &PresetOptions) -> SweepRow {
    let l = ProcessId((seed % n as u64) as usize);
    let scn = preset_dependable_with(n, seed, l, opts);
    let trace = run(&scn).expect("preset scenarios are valid");
    let r = audit(&trace, &AuditConfig::default());
    SweepRow {
        config_hash: scn.fingerprint(),
        n,
        seed,
        expected_leader: l,
        crashes: scn.crashes.len(),
        leader: r.leader,
        converged: r.converged,
        convergence_step: r.convergence_step,
        message_efficient: r.message_efficient,
        packet_efficient: r.packet_efficient,
        pass: r.pass && r.leader == Some(l),
    }
}

fn write_csv<W: Write + ?Sized>(w: &mut W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(
        w,
        "config_hash,n,seed,expected_leader,crashes,leader,converged,convergence_step,message_efficient,packet_efficient,pass"
    )?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.config_hash,
            r.n,
            r.seed,
            r.expected_leader,
            r.crashes,
            opt(r.leader.map(|l| l.to_string())),
            r.converged,
            opt(r.convergence_step.map(|s| s.to_string())),
            r.message_efficient,
            r.packet_efficient,
            r.pass
        )?;
    }
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs) -> Outcome {
    let ns: Vec<usize> = parse_list(&a.n)?;
    if a.seeds == 0 {
        return Err(anyhow::anyhow!("--seeds must be positive").into());
    }
    if let Some(&n) = ns.iter().find(|&&n| n < 2) {
        return Err(anyhow::anyhow!("n = {n} needs at least two processes").into());
    }
    check_horizon(a.horizon)?;
    let opts = PresetOptions {
        horizon: a.horizon,
        crashes: a.crashes,
        variant: a.variant.into(),
        ..PresetOptions::default()
    };
    let cells: Vec<(usize, u64)> = ns
        .iter()
        .flat_map(|&n| (a.seed..a.seed + a.seeds).map(move |s| (n, s)))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(n, s)| sweep_cell(n, s, &opts))
        .collect();
    write_output(a.out.as_deref(), |w| match a.format {
        Format::Csv => write_csv(w, &rows),
        Format::Json => write_json(w, &rows),
    })?;
    let passed = rows.iter().filter(|r| r.pass).count();
    eprintln!("{passed}/{} scenarios passed", rows.len());
    if passed == rows.len() {
        Ok(())
    } else {
        Err(Failure::Audit)
    }
}

pub fn check_horizon(h: Step) -> anyhow::Result<()> {
    if h == 0 {
        bail!("--horizon must be positive");
    }
    Ok(())
}
