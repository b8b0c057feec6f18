//! The step loop.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::channel::{schedule_delivery, ChannelState, Delivery};
use super::scenario::{LateDelay, Mode, Scenario, ScenarioError};
use super::trace::{Trace, TraceEvent, TraceMeta};
use crate::protocol::{MpoState, Packet};
use crate::types::{MessageId, Phase, ProcessId, Step};

// stream ids partition the seed between channels and the propagation sampler
const PROPAGATION_STREAM: u64 = u64::MAX;

/// Reliable and timely propagation graphs of one message, as `n * n`
/// adjacency masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropagationGraphs {
    pub n: usize,
    pub reliable: Vec<bool>,
    pub timely: Vec<bool>,
}

impl PropagationGraphs {
    pub fn sample(n: usize, reliability: f64, timeliness: f64, rng: &mut impl Rng) -> Self {
        let mut reliable = vec![false; n * n];
        let mut timely = vec![false; n * n];
        for a in 0..n {
            for b in 0..n {
                if a != b && rng.gen_bool(reliability) {
                    reliable[a * n + b] = true;
                    timely[a * n + b] = rng.gen_bool(timeliness);
                }
            }
        }
        PropagationGraphs { n, reliable, timely }
    }

    /// The timely graph is a subgraph of the reliable one.
    pub fn is_consistent(&self) -> bool {
        self.timely.iter().zip(&self.reliable).all(|(&t, &r)| !t || r)
    }
}

struct InFlight {
    seq: u64,
    pkt: Packet,
}

enum Router {
    Channels {
        n: usize,
        base: Vec<Option<ChannelState>>,
        overrides: HashMap<(ProcessId, ProcessId, ProcessId), ChannelState>,
    },
    Propagation {
        reliability: f64,
        timeliness: f64,
        b: u64,
        late: LateDelay,
        rng: ChaCha8Rng,
        graphs: HashMap<MessageId, PropagationGraphs>,
    },
}

fn channel_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Router {
    fn new(scn: &Scenario) -> Self {
        let n = scn.n;
        let late = scn.late_delay();
        match scn.mode {
            Mode::DependableChannels => {
                let topo = scn.topology();
                let mut base = Vec::with_capacity(n * n);
                for a in 0..n {
                    for b in 0..n {
                        let (pa, pb) = (ProcessId(a), ProcessId(b));
                        base.push(
                            scn.base_channel(pa, pb)
                                .filter(|_| topo.has_edge(pa, pb))
                                .map(|m| {
                                    ChannelState::new(
                                        m.clone(),
                                        late,
                                        channel_rng(scn.seed, (a * n + b) as u64),
                                    )
                                }),
                        );
                    }
                }
                let overrides = scn
                    .channels
                    .overrides
                    .iter()
                    .map(|o| {
                        let stream = ((n * n) + (o.origin.0 * n + o.from.0) * n + o.to.0) as u64;
                        (
                            (o.from, o.to, o.origin),
                            ChannelState::new(o.model.clone(), late, channel_rng(scn.seed, stream)),
                        )
                    })
                    .collect();
                Router::Channels { n, base, overrides }
            }
            Mode::GeneralPropagation {
                reliability,
                timeliness,
                b,
            } => Router::Propagation {
                reliability,
                timeliness,
                b,
                late,
                rng: channel_rng(scn.seed, PROPAGATION_STREAM),
                graphs: HashMap::new(),
            },
        }
    }

    fn route(&mut self, pkt: &Packet, step: Step, n: usize) -> Delivery {
        match self {
            Router::Channels { n, base, overrides } => {
                let key = (pkt.from, pkt.to, pkt.msg_id.origin);
                let ch = match overrides.get_mut(&key) {
                    Some(ch) => ch,
                    None => match base[pkt.from.0 * *n + pkt.to.0].as_mut() {
                        Some(ch) => ch,
                        None => return Delivery::Dropped,
                    },
                };
                schedule_delivery(ch, pkt, step)
            }
            Router::Propagation {
                reliability,
                timeliness,
                b,
                late,
                rng,
                graphs,
            } => {
                let g = graphs
                    .entry(pkt.msg_id)
                    .or_insert_with(|| PropagationGraphs::sample(n, *reliability, *timeliness, rng));
                let e = pkt.from.0 * n + pkt.to.0;
                if !g.reliable[e] {
                    Delivery::Dropped
                } else if g.timely[e] {
                    Delivery::At(step + rng.gen_range(1..=*b))
                } else {
                    Delivery::At(step + rng.gen_range(late.min..=late.max))
                }
            }
        }
    }
}

struct Engine {
    n: usize,
    horizon: Step,
    states: Vec<MpoState>,
    crashed: Vec<bool>,
    router: Router,
    inflight: BTreeMap<Step, Vec<InFlight>>,
    next_seq: u64,
    events: Vec<TraceEvent>,
}

impl Engine {
    fn emit(&mut self, out: Vec<Packet>, step: Step) {
        for pkt in out {
            self.events.push(TraceEvent::Send {
                step,
                mid: pkt.msg_id,
                kind: pkt.payload.kind(),
                from: pkt.from,
                to: pkt.to,
            });
            match self.router.route(&pkt, step, self.n) {
                Delivery::Dropped => self.events.push(TraceEvent::Drop {
                    step,
                    mid: pkt.msg_id,
                    from: pkt.from,
                    to: pkt.to,
                }),
                Delivery::At(t) => {
                    debug_assert!(t > step);
                    if t <= self.horizon {
                        let seq = self.next_seq;
                        self.next_seq += 1;
                        self.inflight.entry(t).or_default().push(InFlight { seq, pkt });
                    }
                }
            }
        }
    }

    /// Records leader and phase changes made by one handler invocation.
    fn record_changes(&mut self, p: usize, old_leader: Option<ProcessId>, old_phases: &[Phase], step: Step) {
        let s = &self.states[p];
        if s.leader() != old_leader {
            self.events.push(TraceEvent::Leader {
                step,
                proc: ProcessId(p),
                old: old_leader,
                new: s.leader(),
            });
        }
        for (q, (&before, &after)) in old_phases.iter().zip(s.phases()).enumerate() {
            if before != after {
                self.events.push(TraceEvent::Phase {
                    step,
                    proc: ProcessId(p),
                    origin: ProcessId(q),
                    phase: after,
                });
            }
        }
    }

    fn step(&mut self, step: Step, crashes: &[(Step, ProcessId)]) {
        for &(_, p) in crashes.iter().filter(|(s, _)| *s == step) {
            self.crashed[p.0] = true;
            self.events.push(TraceEvent::Crash { step, proc: p });
        }

        if let Some(mut batch) = self.inflight.remove(&step) {
            batch.sort_by_key(|f| (f.pkt.to, f.seq));
            for InFlight { pkt, .. } in batch {
                let to = pkt.to.0;
                if self.crashed[to] {
                    self.events.push(TraceEvent::Drop {
                        step,
                        mid: pkt.msg_id,
                        from: pkt.from,
                        to: pkt.to,
                    });
                    continue;
                }
                self.events.push(TraceEvent::Deliver {
                    step,
                    mid: pkt.msg_id,
                    from: pkt.from,
                    to: pkt.to,
                });
                let old_leader = self.states[to].leader();
                let old_phases = self.states[to].phases().to_vec();
                let out = self.states[to].on_receive(&pkt, step);
                self.record_changes(to, old_leader, &old_phases, step);
                self.emit(out, step);
            }
        }

        for p in 0..self.n {
            if self.crashed[p] {
                continue;
            }
            for q in self.states[p].advance_timers() {
                self.events.push(TraceEvent::Timer {
                    step,
                    proc: ProcessId(p),
                    subject: q,
                    timeout: self.states[p].timer(q).timeout,
                });
                let old_leader = self.states[p].leader();
                let old_phases = self.states[p].phases().to_vec();
                let out = self.states[p].on_timeout(q, step);
                self.record_changes(p, old_leader, &old_phases, step);
                self.emit(out, step);
            }
        }
    }
}

/// Runs a scenario from step 1 through its horizon.
pub fn run(scn: &Scenario) -> Result<Trace, ScenarioError> {
    scn.validate()?;
    let n = scn.n;
    let topology = Arc::new(scn.topology());
    let states = (0..n)
        .map(|p| {
            MpoState::with_topology(ProcessId(p), Arc::clone(&topology), scn.timers)
                .map(|s| s.with_variant(scn.variant))
                .map_err(|e| ScenarioError::Invalid(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut crashes: Vec<(Step, ProcessId)> = scn.crashes.iter().map(|c| (c.step, c.process)).collect();
    crashes.sort();

    let mut engine = Engine {
        n,
        horizon: scn.horizon,
        states,
        crashed: vec![false; n],
        router: Router::new(scn),
        inflight: BTreeMap::new(),
        next_seq: 0,
        events: Vec::new(),
    };
    for step in 1..=scn.horizon {
        engine.step(step, &crashes);
    }

    Ok(Trace {
        meta: TraceMeta {
            fingerprint: scn.fingerprint(),
            n,
            horizon: scn.horizon,
            seed: scn.seed,
            timers: scn.timers,
            timely_bound: scn.timely_bound(),
            expected_leader: scn.expected_leader,
        },
        final_leaders: engine.states.iter().map(MpoState::leader).collect(),
        events: engine.events,
    })
}
