//! Leader existence and stability on random timely digraphs.
//!
//! Every ordered channel is timely independently with probability `p`. A
//! single-hop leader needs timely channels to every other process; a
//! multi-hop leader needs timely paths. Both estimators draw the same
//! digraphs for the same seed, so a single-hop success is always a
//! multi-hop success as well.
//!
//! Trials are split into fixed-size chunks, each with its own ChaCha stream,
//! and summed in parallel; results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::num::Real;

const CHUNK: u64 = 4096;

/// Largest `n` the bitmask digraph supports.
pub const MAX_N: usize = 64;

/// Default per-trial round cap of the stability estimator.
pub const DEFAULT_ROUND_CAP: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Hop {
    SingleHop,
    MultiHop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub estimate: T,
    pub stderr: T,
    pub trials: u64,
    pub successes: u64,
}

impl<T: Real> Estimate<T> {
    fn from_counts(successes: u64, trials: u64) -> Self {
        let est = T::count(successes) / T::count(trials);
        Estimate {
            estimate: est,
            stderr: (est * (T::one() - est) / T::count(trials)).sqrt(),
            trials,
            successes,
        }
    }

    /// `|estimate - target| <= k * stderr`.
    pub fn within(&self, target: T, k: T) -> bool {
        (self.estimate - target).abs() <= k * self.stderr
    }
}

/// One sampled digraph as out-neighbour bitmasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomDigraphSample {
    pub n: usize,
    pub out: Vec<u64>,
}

impl RandomDigraphSample {
    pub fn sample(n: usize, p: f64, rng: &mut impl Rng) -> Self {
        assert!((2..=MAX_N).contains(&n), "n must lie in 2..={MAX_N}");
        let out = (0..n)
            .map(|a| {
                (0..n)
                    .filter(|&b| b != a && rng.gen_bool(p))
                    .fold(0u64, |m, b| m | 1 << b)
            })
            .collect();
        RandomDigraphSample { n, out }
    }

    fn all(&self) -> u64 {
        if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.out[a] >> b & 1 == 1
    }

    /// `v` has a timely channel to every other node.
    pub fn is_direct_source(&self, v: usize) -> bool {
        self.out[v] | 1 << v == self.all()
    }

    /// Nodes reachable from `v`, avoiding `blocked`.
    fn reach_avoiding(&self, v: usize, blocked: u64) -> u64 {
        let mut seen = 1u64 << v;
        let mut frontier = seen;
        while frontier != 0 {
            let u = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let new = self.out[u] & !seen & !blocked;
            seen |= new;
            frontier |= new;
        }
        seen
    }

    /// `v` reaches every node through timely channels.
    pub fn is_reach_source(&self, v: usize) -> bool {
        self.reach_avoiding(v, 0) == self.all()
    }

    pub fn has_single_hop_leader(&self) -> bool {
        (0..self.n).any(|v| self.is_direct_source(v))
    }

    /// Mother-vertex test: the root of the last search tree of a full
    /// traversal is the only possible candidate.
    pub fn has_multi_hop_leader(&self) -> bool {
        let mut visited = 0u64;
        let mut last = 0;
        for v in 0..self.n {
            if visited >> v & 1 == 0 {
                visited |= self.reach_avoiding(v, visited);
                last = v;
            }
        }
        self.is_reach_source(last)
    }

    pub fn has_leader(&self, hop: Hop) -> bool {
        match hop {
            Hop::SingleHop => self.has_single_hop_leader(),
            Hop::MultiHop => self.has_multi_hop_leader(),
        }
    }
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Counts trials in parallel; `trial` gets the chunk RNG for each trial.
fn count_parallel<F>(trials: u64, seed: u64, trial: F) -> u64
where
    F: Fn(&mut ChaCha8Rng) -> u64 + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = CHUNK.min(trials - c * CHUNK);
            (0..len).map(|_| trial(&mut rng)).sum::<u64>()
        })
        .sum()
}

pub fn mc_existence<T: Real>(n: usize, p: T, trials: u64, seed: u64, hop: Hop) -> Estimate<T> {
    assert!(trials >= 1, "need at least one trial");
    let pf = p.to_f64().expect("probability is finite");
    let hits = count_parallel(trials, seed, |rng| {
        RandomDigraphSample::sample(n, pf, rng).has_leader(hop) as u64
    });
    Estimate::from_counts(hits, trials)
}

/// Fraction of digraphs with a node timely-adjacent to all others.
pub fn mc_single_hop<T: Real>(n: usize, p: T, trials: u64, seed: u64) -> Estimate<T> {
    mc_existence(n, p, trials, seed, Hop::SingleHop)
}

/// Fraction of digraphs with a node timely-connected to all others.
pub fn mc_multi_hop<T: Real>(n: usize, p: T, trials: u64, seed: u64) -> Estimate<T> {
    mc_existence(n, p, trials, seed, Hop::MultiHop)
}

/// `1 - (1 - p^(n-1))^n`.
pub fn closed_form_single_hop<T: Real>(n: usize, p: T) -> T {
    let q = p.powi(n as i32 - 1);
    T::one() - (T::one() - q).powi(n as i32)
}

/// `1 - n (1 - p^2)^(n-1)`: an asymptotic lower-bound proxy for a
/// multi-hop leader via bidirectionally timely connectivity. Can be
/// negative for small `n`.
pub fn bitimely_connectivity_bound<T: Real>(n: usize, p: T) -> T {
    T::one() - T::count(n as u64) * (T::one() - p * p).powi(n as i32 - 1)
}

/// Mean run length `q / (1 - q)` with `q = p^(n-1)`: expected number of
/// further rounds a single-hop leader keeps all its channels timely.
pub fn geometric_stability_mean<T: Real>(n: usize, p: T) -> T {
    let q = p.powi(n as i32 - 1);
    q / (T::one() - q)
}

/// Bidirectional edge probability `ln n / n - ln ln(1 + e) / n` of the
/// regime in which multi-hop stability approaches `e`.
pub fn critical_bitimely_probability<T: Real>(n: usize, e: T) -> T {
    let nf = T::count(n as u64);
    let v = nf.ln() / nf - (T::one() + e).ln().ln() / nf;
    v.max(T::zero()).min(T::one())
}

/// Channel probability whose square is [`critical_bitimely_probability`].
pub fn critical_channel_probability<T: Real>(n: usize, e: T) -> T {
    critical_bitimely_probability(n, e).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityEstimate<T> {
    /// Mean number of consecutive rounds node 0 keeps the leader property
    /// after a round where it first holds. A lower bound if any trial was
    /// censored.
    pub mean: T,
    pub stderr: T,
    pub trials: u64,
    /// Trials that reached `cap` rounds.
    pub censored: u64,
    /// Trials in which the property never held within `cap` rounds; they
    /// count as zero.
    pub never_held: u64,
    pub cap: u64,
}

fn node0_holds(n: usize, p: f64, hop: Hop, rng: &mut ChaCha8Rng) -> bool {
    let g = RandomDigraphSample::sample(n, p, rng);
    match hop {
        Hop::SingleHop => g.is_direct_source(0),
        Hop::MultiHop => g.is_reach_source(0),
    }
}

/// Each round resamples the whole digraph. A trial waits for a round in
/// which node 0 has the property, then counts how many consecutive further
/// rounds it keeps it, stopping at `cap`.
pub fn mc_stability<T: Real>(
    n: usize,
    p: T,
    trials: u64,
    seed: u64,
    hop: Hop,
    cap: u64,
) -> StabilityEstimate<T> {
    assert!(trials >= 1 && cap >= 1, "need trials >= 1 and cap >= 1");
    let pf = p.to_f64().expect("probability is finite");
    let chunks = trials.div_ceil(CHUNK);
    // (sum, sum of squares, censored, never held)
    let (sum, sq, censored, never) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = CHUNK.min(trials - c * CHUNK);
            let mut acc = (0u128, 0u128, 0u64, 0u64);
            for _ in 0..len {
                let started = (0..cap).any(|_| node0_holds(n, pf, hop, &mut rng));
                if !started {
                    acc.3 += 1;
                    continue;
                }
                let mut k = 0u64;
                while k < cap && node0_holds(n, pf, hop, &mut rng) {
                    k += 1;
                }
                if k == cap {
                    acc.2 += 1;
                }
                acc.0 += k as u128;
                acc.1 += (k as u128) * (k as u128);
            }
            acc
        })
        .reduce(
            || (0, 0, 0, 0),
            |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3),
        );
    let t = trials as f64;
    let mean = sum as f64 / t;
    let var = if trials > 1 {
        ((sq as f64) - t * mean * mean).max(0.0) / (t - 1.0)
    } else {
        0.0
    };
    StabilityEstimate {
        mean: T::lit(mean),
        stderr: T::lit((var / t).sqrt()),
        trials,
        censored,
        never_held: never,
        cap,
    }
}
