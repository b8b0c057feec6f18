//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria 2 to 6 run the baseline protocol. The same scenarios are
//! then replayed with `Variant::Rebroadcast` and reported for comparison;
//! those lines are informational and do not affect the exit status.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mpo::arborescence::{brute_force_min_arborescence, min_arborescence};
use mpo::audit::{
    audit_channel_usage, audit_message_efficiency, audit_packet_efficiency, audit_timer_bound,
    default_window, detect_convergence, CUTOFF_PERIODS,
};
use mpo::montecarlo::{
    closed_form_single_hop, mc_multi_hop, mc_single_hop, mc_stability, Hop,
};
use mpo::netsim::{
    preset_dependable_with, run, ChannelModel, Mode, PresetOptions, Scenario,
};
use mpo::{EdgeWeights, ProcessId, TimerConfig, Variant, WeightedDigraph};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut agree = 0;
    let mut first_bad = None;
    for i in 0..500 {
        let n = 2 + i % 4;
        let w = EdgeWeights::from_fn(n, |a, b| if a == b { 0 } else { rng.gen_range(0..=9u64) });
        let root = ProcessId(rng.gen_range(0..n));
        let g = WeightedDigraph::complete(&w);
        let fast = min_arborescence(&g, root).unwrap();
        let slow = brute_force_min_arborescence(&g, root).unwrap();
        if fast.weight() == slow.weight() && fast.edges() == slow.edges() {
            agree += 1;
        } else if first_bad.is_none() {
            first_bad = Some(i);
        }
    }
    let t = start.elapsed();
    verdict(
        agree == 500 && t < Duration::from_secs(10),
        format!("{agree}/500 instances agree on weight and edge set, first mismatch {first_bad:?}, {t:.2?}"),
    )
}

// ---------------------------------------------------------------- 2..6

const SIZES: [usize; 4] = [3, 4, 6, 8];
const SEEDS: u64 = 100;
const HORIZON: u64 = 50_000;

/// What criteria 2 to 6 need from one run.
struct RunSummary {
    n: usize,
    seed: u64,
    l: ProcessId,
    crashed: usize,
    last_crash: u64,
    late_crashers: Vec<ProcessId>,
    cutoff: u64,
    converged_to: Option<(ProcessId, u64)>,
    origins: Vec<ProcessId>,
    max_alive_packets: usize,
    tail: u64,
    channels: usize,
    timer_within: bool,
    timer_settled: bool,
    timer_max: u64,
    timer_bound: u64,
}

fn summarize(n: usize, seed: u64, variant: Variant) -> RunSummary {
    let l = ProcessId((seed % n as u64) as usize);
    let opts = PresetOptions {
        horizon: HORIZON,
        variant,
        ..PresetOptions::default()
    };
    let scn = preset_dependable_with(n, seed, l, &opts);
    let tr = run(&scn).expect("preset scenarios are valid");
    let window = default_window(HORIZON);
    let conv = detect_convergence(&tr, window);
    let cutoff = conv.map_or(HORIZON, |(_, s)| s + CUTOFF_PERIODS * tr.meta.timers.sender_timeout);
    let tb = audit_timer_bound(&tr, l, window);
    RunSummary {
        n,
        seed,
        l,
        crashed: scn.crashes.len(),
        last_crash: scn.crashes.iter().map(|c| c.step).max().unwrap_or(0),
        late_crashers: scn.crashes.iter().filter(|c| c.step > cutoff).map(|c| c.process).collect(),
        cutoff,
        converged_to: conv,
        origins: audit_message_efficiency(&tr, cutoff).into_iter().collect(),
        max_alive_packets: audit_packet_efficiency(&tr, cutoff).max_alive_packets,
        tail: HORIZON.saturating_sub(cutoff),
        channels: audit_channel_usage(&tr, cutoff),
        timer_within: tb.within_bound,
        timer_settled: tb.settled,
        timer_max: tb.timers.iter().map(|g| g.final_timeout).max().unwrap_or(0),
        timer_bound: tb.bound,
    }
}

fn suite(variant: Variant) -> Vec<RunSummary> {
    let cells: Vec<(usize, u64)> = SIZES
        .iter()
        .flat_map(|&n| (0..SEEDS).map(move |s| (n, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(n, s)| summarize(n, s, variant))
        .collect()
}

fn converged(runs: &[RunSummary]) -> impl Iterator<Item = &RunSummary> {
    runs.iter().filter(|r| r.converged_to.is_some())
}

fn per_size(runs: &[RunSummary], ok: impl Fn(&RunSummary) -> bool) -> String {
    SIZES
        .iter()
        .map(|&n| {
            let of_n: Vec<&RunSummary> = runs.iter().filter(|r| r.n == n).collect();
            let good = of_n.iter().filter(|r| ok(r)).count();
            format!("n={n}: {good}/{}", of_n.len())
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn first_failures(runs: &[RunSummary], ok: impl Fn(&RunSummary) -> bool) -> String {
    let bad: Vec<String> = runs
        .iter()
        .filter(|r| !ok(r))
        .take(4)
        .map(|r| format!("n={} seed={}", r.n, r.seed))
        .collect();
    if bad.is_empty() {
        String::new()
    } else {
        format!("; e.g. {}", bad.join(", "))
    }
}

fn criterion_2(runs: &[RunSummary]) -> Verdict {
    let ok = |r: &RunSummary| matches!(r.converged_to, Some((ld, _)) if ld == r.l);
    let good = runs.iter().filter(|r| ok(r)).count();
    verdict(
        good == runs.len(),
        format!(
            "{good}/{} runs converge to l ({}){}",
            runs.len(),
            per_size(runs, ok),
            first_failures(runs, ok)
        ),
    )
}

fn criterion_3(runs: &[RunSummary]) -> Verdict {
    let conv: Vec<&RunSummary> = converged(runs).collect();
    let ok = |r: &&RunSummary| r.origins == [r.l];
    let good = conv.iter().filter(|r| ok(r)).count();
    let crash_only = conv
        .iter()
        .filter(|r| !ok(r) && r.origins.iter().all(|o| *o == r.l || r.late_crashers.contains(o)))
        .count();
    verdict(
        good == conv.len(),
        format!(
            "{good}/{} converged runs have origins exactly {{l}} after the cutoff; {crash_only} of the others only add processes that crash later",
            conv.len()
        ),
    )
}

fn criterion_4(runs: &[RunSummary]) -> Verdict {
    let conv: Vec<&RunSummary> = converged(runs).collect();
    let ok = |r: &&RunSummary| r.max_alive_packets <= 2 * (r.n - 1);
    let good = conv.iter().filter(|r| ok(r)).count();
    let worst = conv
        .iter()
        .map(|r| (r.max_alive_packets, 2 * (r.n - 1)))
        .max_by_key(|&(m, b)| m as i64 - b as i64);
    verdict(
        good == conv.len(),
        format!(
            "{good}/{} converged runs keep every Alive within 2(n-1) packets; worst (packets, bound) {worst:?}",
            conv.len()
        ),
    )
}

fn criterion_5(runs: &[RunSummary]) -> Verdict {
    // crashed processes send nothing, so k crashes leave (n-k)(n-1) channels;
    // a process that crashes after the cutoff uses only part of its own
    let eligible: Vec<&RunSummary> = converged(runs)
        .filter(|r| r.tail >= r.n as u64 * TimerConfig::default().sender_timeout)
        .filter(|r| r.last_crash <= r.cutoff)
        .collect();
    let late_crash = converged(runs).filter(|r| r.last_crash > r.cutoff).count();
    let ok = |r: &&RunSummary| r.channels == (r.n - r.crashed) * (r.n - 1);
    let good = eligible.iter().filter(|r| ok(r)).count();
    let bad: Vec<String> = eligible
        .iter()
        .filter(|r| !ok(r))
        .take(4)
        .map(|r| format!("n={} seed={} used {} of {}", r.n, r.seed, r.channels, (r.n - r.crashed) * (r.n - 1)))
        .collect();
    verdict(
        good == eligible.len(),
        format!(
            "{good}/{} converged runs use every channel out of a live process after the cutoff ({late_crash} skipped: crash after cutoff){}",
            eligible.len(),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join(", ")) }
        ),
    )
}

fn criterion_6(runs: &[RunSummary]) -> Verdict {
    let conv: Vec<&RunSummary> = converged(runs).collect();
    let settled = conv.iter().filter(|r| r.timer_settled).count();
    let within = conv.iter().filter(|r| r.timer_within).count();
    let worst = conv
        .iter()
        .filter(|r| !r.timer_within)
        .map(|r| (r.timer_max, r.timer_bound))
        .max_by_key(|&(m, b)| m - b);
    verdict(
        settled == conv.len() && within == conv.len(),
        format!(
            "of {} converged runs, {settled} settle before the horizon and {within} end within the bound; worst (timeout, bound) {worst:?}",
            conv.len()
        ),
    )
}

// ---------------------------------------------------------------- 7..9

/// Exact single-hop existence probability by enumerating every digraph.
fn exhaustive_single_hop(n: usize, p: f64) -> f64 {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let m = pairs.len();
    let mut total = 0.0;
    for mask in 0u64..(1 << m) {
        let has = |a: usize, b: usize| {
            let i = pairs.iter().position(|&e| e == (a, b)).unwrap();
            mask >> i & 1 == 1
        };
        let source = (0..n).any(|v| (0..n).all(|u| u == v || has(v, u)));
        if source {
            let k = mask.count_ones() as i32;
            total += p.powi(k) * (1.0 - p).powi(m as i32 - k);
        }
    }
    total
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let e = mc_single_hop::<f64>(20, 0.8, 100_000, 7);
    let cf = closed_form_single_hop(20, 0.8);
    let mc_ok = e.within(cf, 4.0);
    let mut exact_ok = true;
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        for p in [0.1, 0.35, 0.5, 0.8, 0.95] {
            let d = (exhaustive_single_hop(n, p) - closed_form_single_hop(n, p)).abs();
            worst = worst.max(d);
            exact_ok &= d < 1e-12;
        }
    }
    let t = start.elapsed();
    verdict(
        mc_ok && exact_ok && t < Duration::from_secs(30),
        format!(
            "n=20 p=0.8: {:.5} +- {:.5} vs closed form {cf:.5}; exhaustive n<=4 max |diff| {worst:.1e}; {t:.2?}",
            e.estimate, e.stderr
        ),
    )
}

/// Values of an independent oracle (adjacency matrices and depth-first
/// search, 200k trials at p = 0.8), frozen from its first run.
const FROZEN: [(usize, f64, f64); 4] = [
    // (n, single-hop, multi-hop)
    (5, 0.92753, 0.99995),
    (10, 0.76229, 1.0),
    (20, 0.253035, 1.0),
    (40, 0.00688, 1.0),
];
const ORACLE_TRIALS: f64 = 200_000.0;
const MULTI_AT_40_FLOOR: f64 = 0.99;
const SINGLE_AT_40_CEIL: f64 = 0.3;

fn criterion_8() -> Verdict {
    let trials = 100_000;
    let mut notes = Vec::new();
    let mut ok = true;
    let mut prev: Option<(f64, f64)> = None;
    for &(n, fs, fm) in &FROZEN {
        let s = mc_single_hop::<f64>(n, 0.8, trials, 40 + n as u64);
        let m = mc_multi_hop::<f64>(n, 0.8, trials, 40 + n as u64);
        // shared seeds: every single-hop success is a multi-hop success
        ok &= m.successes >= s.successes;
        for (est, frozen, se) in [(s.estimate, fs, s.stderr), (m.estimate, fm, m.stderr)] {
            let se_oracle = (frozen * (1.0 - frozen) / ORACLE_TRIALS).sqrt();
            let tol = 4.0 * (se * se + se_oracle * se_oracle).sqrt() + 1.0 / trials as f64;
            ok &= (est - frozen).abs() <= tol;
        }
        if let Some((ps, pm)) = prev {
            ok &= s.estimate <= ps && m.estimate >= pm;
        }
        prev = Some((s.estimate, m.estimate));
        if n == 40 {
            ok &= m.estimate >= MULTI_AT_40_FLOOR && s.estimate <= SINGLE_AT_40_CEIL;
        }
        notes.push(format!("n={n} single {:.4} multi {:.5}", s.estimate, m.estimate));
    }
    verdict(ok, notes.join(", "))
}

fn criterion_9() -> Verdict {
    let (n, p) = (4, 0.9);
    let s = mc_stability::<f64>(n, p, 100_000, 9, Hop::SingleHop, 100_000);
    let m = mc_stability::<f64>(n, p, 100_000, 9, Hop::MultiHop, 100_000);
    let q: f64 = p * p * p;
    let target = q / (1.0 - q);
    let ok = s.censored == 0
        && s.never_held == 0
        && (s.mean - target).abs() <= 4.0 * s.stderr
        && m.mean > s.mean;
    verdict(
        ok,
        format!(
            "single-hop mean {:.4} +- {:.4} vs q/(1-q) = {target:.4} ({} censored); multi-hop mean {:.2}",
            s.mean, s.stderr, s.censored, m.mean
        ),
    )
}

// ---------------------------------------------------------------- 10

fn trace_bytes(scn: &Scenario) -> Vec<u8> {
    let mut out = Vec::new();
    run(scn).unwrap().write_jsonl(&mut out).unwrap();
    out
}

fn criterion_10() -> Verdict {
    let mut scenarios = vec![
        preset_dependable_with(6, 3, ProcessId(3), &PresetOptions { horizon: 20_000, ..PresetOptions::default() }),
        preset_dependable_with(
            8,
            5,
            ProcessId(5),
            &PresetOptions {
                horizon: 20_000,
                variant: Variant::Rebroadcast,
                ..PresetOptions::default()
            },
        ),
        Scenario::uniform(5, ChannelModel::StronglyNonTimely { burst: 3 }, 11, 10_000),
    ];
    let mut general = Scenario::uniform(5, ChannelModel::Lossy, 12, 10_000);
    general.mode = Mode::GeneralPropagation {
        reliability: 0.7,
        timeliness: 0.5,
        b: 3,
    };
    scenarios.push(general);
    let scenarios = Arc::new(scenarios);
    let mut identical = 0;
    for i in 0..scenarios.len() {
        let a = trace_bytes(&scenarios[i]);
        // a second copy from another thread, to catch thread-local state
        let s = Arc::clone(&scenarios);
        let b = std::thread::spawn(move || trace_bytes(&s[i])).join().unwrap();
        identical += (a == b && !a.is_empty()) as usize;
    }
    verdict(
        identical == scenarios.len(),
        format!("{identical}/{} scenarios give byte-identical traces", scenarios.len()),
    )
}

// ---------------------------------------------------------------- driver

fn report(id: &str, title: &str, v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {id} {title}: {}", v.detail);
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags; listing must not run the suite
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut all = true;
    let mut check = |id: &str, title: &str, v: Verdict| {
        report(id, title, &v);
        all &= v.pass;
    };

    check("1", "arborescence oracle equivalence", criterion_1());

    let runs = suite(Variant::Baseline);
    check("2", "convergence to the designated leader", criterion_2(&runs));
    check("3", "message efficiency", criterion_3(&runs));
    check("4", "packet efficiency", criterion_4(&runs));
    check("5", "channel usage after convergence", criterion_5(&runs));
    check("6", "receiver timer bound", criterion_6(&runs));

    check("7", "single-hop existence", criterion_7());
    check("8", "multi-hop dominance and trend", criterion_8());
    check("9", "stability mean", criterion_9());
    check("10", "determinism", criterion_10());

    // same scenarios, rebroadcasting leader; informational only
    let alt = suite(Variant::Rebroadcast);
    for (id, title, v) in [
        ("2", "convergence to the designated leader", criterion_2(&alt)),
        ("3", "message efficiency", criterion_3(&alt)),
        ("4", "packet efficiency", criterion_4(&alt)),
        ("5", "channel usage after convergence", criterion_5(&alt)),
        ("6", "receiver timer bound", criterion_6(&alt)),
    ] {
        let tag = if v.pass { "pass" } else { "fail" };
        println!("[info:{tag}] rebroadcast {id} {title}: {}", v.detail);
    }

    if all {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: at least one criterion failed");
        ExitCode::FAILURE
    }
}
