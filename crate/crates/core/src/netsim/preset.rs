//! Random scenarios in which a designated process can become a stable,
//! efficient leader: eventually timely paths from it to every correct
//! process and fair-lossy paths from every process back to it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{
    ChannelModel, ChannelSpec, Crash, FairLossyPolicy, Mode, PairModel, Scenario,
};
use crate::protocol::{TimerConfig, Variant};
use crate::types::{ProcessId, Step};

#[derive(Debug, Clone, PartialEq)]
pub struct PresetOptions {
    pub horizon: Step,
    pub timers: TimerConfig,
    /// Timely bound of the eventually timely tree.
    pub b: u64,
    /// Upper end of the random step at which the timely tree stabilizes.
    pub max_unreliable_until: Step,
    /// Number of non-leader crashes; `None` draws it from `0..=n/3`.
    pub crashes: Option<usize>,
    /// Crash steps are drawn from `1..=crash_by`.
    pub crash_by: Step,
    pub variant: Variant,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions {
            horizon: 50_000,
            timers: TimerConfig::default(),
            b: 2,
            max_unreliable_until: 1_000,
            crashes: None,
            crash_by: 1_000,
            variant: Variant::Baseline,
        }
    }
}

/// [`preset_dependable_with`] under default options.
pub fn preset_dependable(n: usize, seed: u64, l: ProcessId) -> Scenario {
    preset_dependable_with(n, seed, l, &PresetOptions::default())
}

/// Builds a random dependable-channel scenario for leader `l`.
///
/// Crashed processes hang off the timely tree as leaves, so no correct
/// process depends on them. Channels of the timely tree win over the
/// fair-lossy reverse tree where the two pick the same pair.
pub fn preset_dependable_with(n: usize, seed: u64, l: ProcessId, opts: &PresetOptions) -> Scenario {
    assert!(n >= 2 && l.0 < n, "preset needs n >= 2 and l < n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = opts.b.max(1);
    let unreliable_until = rng.gen_range(0..=opts.max_unreliable_until);

    let mut others: Vec<usize> = (0..n).filter(|&p| p != l.0).collect();
    others.shuffle(&mut rng);
    let k = opts
        .crashes
        .unwrap_or_else(|| rng.gen_range(0..=n / 3))
        .min(n - 1);
    let crashed: Vec<usize> = others[..k].to_vec();
    let correct: Vec<usize> = others[k..].to_vec();
    let mut crashes: Vec<Crash> = crashed
        .iter()
        .map(|&p| Crash {
            process: ProcessId(p),
            step: rng.gen_range(1..=opts.crash_by.clamp(1, opts.horizon)),
        })
        .collect();
    crashes.sort_by_key(|c| c.process);

    let mut model: Vec<Option<ChannelModel>> = vec![None; n * n];
    let idx = |a: usize, c: usize| a * n + c;

    // random recursive out-tree over the correct processes, then crashed leaves
    let mut placed = vec![l.0];
    for &c in &correct {
        let parent = *placed.choose(&mut rng).expect("root placed");
        model[idx(parent, c)] = Some(ChannelModel::EventuallyTimely { b, unreliable_until });
        placed.push(c);
    }
    for &c in &crashed {
        let parent = *placed.choose(&mut rng).expect("root placed");
        model[idx(parent, c)] = Some(ChannelModel::EventuallyTimely { b, unreliable_until });
    }

    // random recursive in-tree towards l, again with crashed processes as leaves
    let mut order = correct.clone();
    order.shuffle(&mut rng);
    order.extend(&crashed);
    let mut placed = vec![l.0];
    for &c in &order {
        let parent = *placed.choose(&mut rng).expect("root placed");
        let slot = &mut model[idx(c, parent)];
        if slot.is_none() {
            *slot = Some(ChannelModel::FairLossy {
                policy: FairLossyPolicy::DropPattern {
                    d: rng.gen_range(1..=3),
                },
            });
        }
        if !crashed.contains(&c) {
            placed.push(c);
        }
    }

    let mut pairs = Vec::with_capacity(n * (n - 1));
    for a in 0..n {
        for c in 0..n {
            if a == c {
                continue;
            }
            let m = model[idx(a, c)].take().unwrap_or_else(|| match rng.gen_range(0..3) {
                0 => ChannelModel::FairLossy {
                    policy: FairLossyPolicy::Probabilistic {
                        q: (rng.gen_range(20..=80) as f64) / 100.0,
                    },
                },
                1 => ChannelModel::StronglyNonTimely {
                    burst: rng.gen_range(b..=4 * b),
                },
                _ => ChannelModel::Lossy,
            });
            pairs.push(PairModel {
                from: ProcessId(a),
                to: ProcessId(c),
                model: m,
            });
        }
    }

    Scenario {
        n,
        seed,
        horizon: opts.horizon,
        timers: opts.timers,
        expected_leader: Some(l),
        late_delay: None,
        crashes,
        mode: Mode::DependableChannels,
        topology: None,
        channels: ChannelSpec {
            default: None,
            pairs,
            overrides: Vec::new(),
        },
        variant: opts.variant,
    }
}

/// Processes reachable from `root` over channels accepted by `keep`.
pub fn reachable_over(
    scn: &Scenario,
    root: ProcessId,
    keep: impl Fn(&ChannelModel) -> bool,
) -> Vec<bool> {
    let n = scn.n;
    let mut seen = vec![false; n];
    seen[root.0] = true;
    let mut stack = vec![root.0];
    while let Some(u) = stack.pop() {
        for v in 0..n {
            if seen[v] || u == v {
                continue;
            }
            if scn
                .base_channel(ProcessId(u), ProcessId(v))
                .is_some_and(&keep)
            {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

pub fn is_eventually_timely(m: &ChannelModel) -> bool {
    matches!(
        m,
        ChannelModel::Timely { .. } | ChannelModel::EventuallyTimely { .. }
    )
}

/// Channels that deliver infinitely many packets of every stream.
pub fn is_fair_lossy(m: &ChannelModel) -> bool {
    !matches!(m, ChannelModel::Lossy)
}
