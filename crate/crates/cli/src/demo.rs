use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::Args;

use mpo::audit::{audit, AuditConfig};
use mpo::netsim::{preset_dependable_with, run, Crash, PresetOptions, TraceEvent};
use mpo::{MessageKind, ProcessId, Step};

use crate::sweep::check_horizon;
use crate::{fmt_ids, verdict, write_output, Failure, Outcome, VariantArg};

#[derive(Args, Debug)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, env = "MPO_SEED", default_value_t = 0)]
    seed: u64,
    /// Designated leader; `seed mod n` when absent.
    #[arg(long)]
    leader: Option<usize>,
    #[arg(long, default_value_t = 50_000)]
    horizon: Step,
    /// Extra crash as `P@STEP`; `l` names the designated leader. Repeatable.
    #[arg(long = "crash")]
    crashes: Vec<String>,
    #[arg(long, value_enum, default_value_t = VariantArg::Baseline)]
    variant: VariantArg,
    /// Also write the trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn parse_crash(s: &str, l: ProcessId, n: usize) -> anyhow::Result<Crash> {
    let (who, step) = s
        .split_once('@')
        .ok_or_else(|| anyhow!("crash {s:?} is not P@STEP"))?;
    let process = if who == "l" {
        l
    } else {
        ProcessId(who.parse().with_context(|| format!("crash process {who:?}"))?)
    };
    if process.0 >= n {
        bail!("crash process {process} out of range for n = {n}");
    }
    let step = step.parse().with_context(|| format!("crash step {step:?}"))?;
    Ok(Crash { process, step })
}

pub fn cmd_demo(a: &DemoArgs) -> Outcome {
    if a.n < 2 {
        return Err(anyhow!("--n must be at least 2").into());
    }
    check_horizon(a.horizon)?;
    let l = ProcessId(a.leader.unwrap_or((a.seed % a.n as u64) as usize));
    if l.0 >= a.n {
        return Err(anyhow!("--leader {l} out of range for n = {}", a.n).into());
    }
    let opts = PresetOptions {
        horizon: a.horizon,
        variant: a.variant.into(),
        ..PresetOptions::default()
    };
    let mut scn = preset_dependable_with(a.n, a.seed, l, &opts);
    for c in &a.crashes {
        let c = parse_crash(c, l, a.n)?;
        scn.crashes.retain(|x| x.process != c.process);
        scn.crashes.push(c);
    }
    scn.crashes.sort_by_key(|c| c.process);
    if scn.crash_step(l).is_some() {
        scn.expected_leader = None;
    }
    let trace = run(&scn).map_err(anyhow::Error::from)?;
    if let Some(p) = &a.trace {
        write_output(Some(p), |w| trace.write_jsonl(w))?;
    }
    let r = audit(&trace, &AuditConfig::default());

    let mut sent: BTreeMap<MessageKind, usize> = BTreeMap::new();
    for e in &trace.events {
        if let TraceEvent::Send { kind, .. } = e {
            *sent.entry(*kind).or_default() += 1;
        }
    }
    let crashes: Vec<String> = scn
        .crashes
        .iter()
        .map(|c| format!("{}@{}", c.process, c.step))
        .collect();

    println!(
        "scenario      n={} seed={} horizon={} variant={} fingerprint={}",
        scn.n, scn.seed, scn.horizon, format!("{:?}", scn.variant).to_lowercase(), r.fingerprint
    );
    println!("designated    {l}");
    println!(
        "crashes       {}",
        if crashes.is_empty() { "none".to_owned() } else { crashes.join(", ") }
    );
    match (r.leader, r.convergence_step) {
        (Some(ld), Some(s)) if r.converged => println!("converged     leader {ld} from step {s}"),
        _ => println!("converged     no"),
    }
    if let Some(cs) = scn.crash_step(l) {
        let after = trace
            .events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Leader { .. }) && e.step() >= cs)
            .count();
        println!("re-election   {l} crashed at step {cs}; {after} leader changes since");
    }
    let packets: Vec<String> = sent.iter().map(|(k, v)| format!("{k:?}={v}")).collect();
    println!("packets sent  {}", packets.join(" "));
    if let Some(c) = r.cutoff {
        println!(
            "after {c:<7} messages {} from {}, max packets per Alive {} (bound {}), channels used {}",
            r.messages_after_cutoff,
            fmt_ids(&r.origins_after_cutoff),
            r.max_alive_packets_after_cutoff,
            r.packet_bound,
            r.channels_used_after_cutoff
        );
    }
    println!("verdict       {}", verdict(&r));
    if r.pass {
        Ok(())
    } else {
        Err(Failure::Audit)
    }
}
