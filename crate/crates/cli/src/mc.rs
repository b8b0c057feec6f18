use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::bail;
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use mpo::montecarlo::{
    bitimely_connectivity_bound, closed_form_single_hop, geometric_stability_mean, mc_existence,
    mc_stability, Hop, DEFAULT_ROUND_CAP, MAX_N,
};

use crate::{parse_list, write_json, write_output, Outcome};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum McMode {
    /// Single-hop and multi-hop existence side by side.
    Existence,
    SingleHop,
    MultiHop,
    /// Rounds a leader keeps its property, for both hop kinds.
    Stability,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct McArgs {
    #[arg(long, value_enum)]
    mode: McMode,
    /// Comma-separated process counts.
    #[arg(long)]
    n: String,
    /// Comma-separated timely-channel probabilities.
    #[arg(long)]
    p: String,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, env = "MPO_SEED", default_value_t = 0)]
    seed: u64,
    /// Round cap for stability trials.
    #[arg(long, default_value_t = DEFAULT_ROUND_CAP)]
    cap: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub mode: &'static str,
    pub n: usize,
    pub p: f64,
    pub trials: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub closed_form: Option<f64>,
    /// Stability trials stopped at the cap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censored: Option<u64>,
    pub seed: u64,
}

/// Seed of grid cell `i`; the hop kinds of one cell share it.
fn cell_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn hop_name(h: Hop) -> &'static str {
    match h {
        Hop::SingleHop => "single_hop",
        Hop::MultiHop => "multi_hop",
    }
}

fn cell(mode: McMode, n: usize, p: f64, trials: u64, seed: u64, cap: u64) -> Vec<Row> {
    let hops: &[Hop] = match mode {
        McMode::SingleHop => &[Hop::SingleHop],
        McMode::MultiHop => &[Hop::MultiHop],
        McMode::Existence | McMode::Stability => &[Hop::SingleHop, Hop::MultiHop],
    };
    hops.iter()
        .map(|&hop| {
            if mode == McMode::Stability {
                let s = mc_stability::<f64>(n, p, trials, seed, hop, cap);
                Row {
                    mode: match hop {
                        Hop::SingleHop => "stability_single_hop",
                        Hop::MultiHop => "stability_multi_hop",
                    },
                    n,
                    p,
                    trials,
                    estimate: s.mean,
                    stderr: s.stderr,
                    closed_form: (hop == Hop::SingleHop).then(|| geometric_stability_mean(n, p)),
                    censored: Some(s.censored),
                    seed,
                }
            } else {
                let e = mc_existence::<f64>(n, p, trials, seed, hop);
                Row {
                    mode: hop_name(hop),
                    n,
                    p,
                    trials,
                    estimate: e.estimate,
                    stderr: e.stderr,
                    closed_form: Some(match hop {
                        Hop::SingleHop => closed_form_single_hop(n, p),
                        Hop::MultiHop => bitimely_connectivity_bound(n, p),
                    }),
                    censored: None,
                    seed,
                }
            }
        })
        .collect()
}

/// Evaluates the whole grid. Rows come grouped by mode, then in grid order.
pub fn grid(mode: McMode, ns: &[usize], ps: &[f64], trials: u64, seed: u64, cap: u64) -> Vec<Row> {
    let cells: Vec<(usize, f64)> = ns
        .iter()
        .flat_map(|&n| ps.iter().map(move |&p| (n, p)))
        .collect();
    let mut rows: Vec<Row> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(n, p))| cell(mode, n, p, trials, cell_seed(seed, i), cap))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    // stable: keeps grid order within a mode
    rows.sort_by_key(|r| r.mode);
    rows
}

pub fn write_csv<W: Write + ?Sized>(w: &mut W, rows: &[Row]) -> io::Result<()> {
    writeln!(w, "mode,n,p,trials,estimate,stderr,closed_form")?;
    for r in rows {
        let cf = r.closed_form.map_or(String::new(), |c| c.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.mode, r.n, r.p, r.trials, r.estimate, r.stderr, cf
        )?;
    }
    Ok(())
}

fn grid_params(a: &McArgs) -> anyhow::Result<(Vec<usize>, Vec<f64>)> {
    let ns: Vec<usize> = parse_list(&a.n)?;
    let ps: Vec<f64> = parse_list(&a.p)?;
    if a.trials == 0 {
        bail!("--trials must be positive");
    }
    if a.cap == 0 {
        bail!("--cap must be positive");
    }
    if let Some(&n) = ns.iter().find(|&&n| !(2..=MAX_N).contains(&n)) {
        bail!("n = {n} outside 2..={MAX_N}");
    }
    if let Some(&p) = ps.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
        bail!("p = {p} outside [0, 1]");
    }
    Ok((ns, ps))
}

pub fn cmd_mc(a: &McArgs) -> Outcome {
    let (ns, ps) = grid_params(a)?;
    let rows = grid(a.mode, &ns, &ps, a.trials, a.seed, a.cap);
    write_output(a.out.as_deref(), |w| match a.format {
        Format::Csv => write_csv(w, &rows),
        Format::Json => write_json(w, &rows),
    })?;
    Ok(())
}
