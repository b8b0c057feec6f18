//! One process of the message- and packet-efficient Omega detector.
//!
//! [`MpoState`] is a plain value. Every stimulus (a timer firing, a packet
//! arriving) is a method that mutates the state and returns the packets the
//! process transmits in response; the same state fed the same stimuli
//! produces the same packets. The caller owns time: it ticks timers with
//! [`MpoState::advance_timers`] and dispatches the fired ones.
//!
//! Messages are routed two ways. `StartPhase`, `StopPhase` and `Failed` are
//! flooded: every process forwards them once to all neighbours. `Alive` is
//! forwarded along the origin's arborescence, except that each round one
//! process (the `shout` target) fans it out to every neighbour.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arborescence::{min_arborescence, WeightedDigraph};
use crate::topology::Topology;
use crate::types::{MessageId, Phase, ProcessId, Step};
use crate::{Arborescence, EdgeWeights};

/// Timer lengths, in computation steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimerConfig {
    /// Period of the sender timer (how often a leader emits `Alive`).
    pub sender_timeout: u64,
    /// Starting length of every receiver timer.
    pub initial_receiver_timeout: u64,
    /// Added to a receiver timer each time it expires.
    pub timeout_increment: u64,
}

impl Default for TimerConfig {
    fn default() -> Self {
        TimerConfig {
            sender_timeout: 16,
            initial_receiver_timeout: 8,
            timeout_increment: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimerStatus {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimerState {
    pub status: TimerStatus,
    pub timeout: u64,
    pub elapsed: u64,
}

impl TimerState {
    fn new(status: TimerStatus, timeout: u64) -> Self {
        TimerState {
            status,
            timeout,
            elapsed: 0,
        }
    }

    pub fn is_on(&self) -> bool {
        self.status == TimerStatus::On
    }

    fn reset(&mut self) {
        self.status = TimerStatus::On;
        self.elapsed = 0;
    }

    fn stop(&mut self) {
        self.status = TimerStatus::Off;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    StartPhase,
    StopPhase,
    Alive,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Message {
    StartPhase {
        origin: ProcessId,
        phase: Phase,
        arb: Arc<Arborescence>,
    },
    StopPhase {
        origin: ProcessId,
        phase: Phase,
    },
    Alive {
        origin: ProcessId,
        phase: Phase,
        shout: ProcessId,
    },
    /// `reporter` missed an `Alive` of `origin`; `parent` is the reporter's
    /// parent in its stored arborescence for `origin`.
    Failed {
        origin: ProcessId,
        reporter: ProcessId,
        parent: ProcessId,
    },
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::StartPhase { .. } => MessageKind::StartPhase,
            Message::StopPhase { .. } => MessageKind::StopPhase,
            Message::Alive { .. } => MessageKind::Alive,
            Message::Failed { .. } => MessageKind::Failed,
        }
    }

    /// The leader candidate the message is about.
    pub fn subject(&self) -> ProcessId {
        match *self {
            Message::StartPhase { origin, .. }
            | Message::StopPhase { origin, .. }
            | Message::Alive { origin, .. }
            | Message::Failed { origin, .. } => origin,
        }
    }
}

/// One transmission of a message over the channel `from -> to`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub msg_id: MessageId,
    pub payload: Message,
    pub from: ProcessId,
    pub to: ProcessId,
    pub sent_step: Step,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("need at least two processes, got n = {0}")]
    TooFewProcesses(usize),
    #[error("process id {p} out of range for n = {n}")]
    ProcessOutOfRange { p: ProcessId, n: usize },
    #[error("topology is not strongly connected")]
    NotStronglyConnected,
    #[error("timer lengths must be positive")]
    ZeroTimeout,
}

/// Which leader behaviour to run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// The five actions of the reference protocol, unchanged.
    #[default]
    Baseline,
    /// As [`Variant::Baseline`], except that a persisting leader sends a fresh
    /// `StartPhase` in its current phase instead of `Alive` when its optimal
    /// arborescence differs from the one it routes on, when another process
    /// has announced itself, or when some process reported losing its
    /// stream, since the last sender timeout.
    Rebroadcast,
}

impl Variant {
    pub fn is_baseline(&self) -> bool {
        *self == Variant::Baseline
    }
}

/// Complete protocol state of one process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpoState {
    p: ProcessId,
    n: usize,
    cfg: TimerConfig,
    topology: Arc<Topology>,
    leader: Option<ProcessId>,
    phases: Vec<Phase>,
    edges: EdgeWeights,
    arbs: Vec<Option<Arc<Arborescence>>>,
    timers: Vec<TimerState>,
    shout: usize,
    seen: HashSet<MessageId>,
    next_seq: u64,
    // memoised own arborescence, keyed by the number of edge updates so far
    edges_version: u64,
    arb_cache: Option<(u64, Arc<Arborescence>)>,
    variant: Variant,
    // a competing StartPhase or Alive arrived while leading
    challenged: bool,
}

/// Initial state of process `p` in a fully connected network of `n`.
pub fn init_state(p: ProcessId, n: usize, cfg: TimerConfig) -> Result<MpoState, ConfigError> {
    MpoState::new(p, n, cfg)
}

impl MpoState {
    pub fn new(p: ProcessId, n: usize, cfg: TimerConfig) -> Result<Self, ConfigError> {
        if n < 2 {
            return Err(ConfigError::TooFewProcesses(n));
        }
        Self::with_topology(p, Arc::new(Topology::complete(n)), cfg)
    }

    /// Initial state over an arbitrary strongly connected topology.
    pub fn with_topology(
        p: ProcessId,
        topology: Arc<Topology>,
        cfg: TimerConfig,
    ) -> Result<Self, ConfigError> {
        let n = topology.n();
        if n < 2 {
            return Err(ConfigError::TooFewProcesses(n));
        }
        if p.0 >= n {
            return Err(ConfigError::ProcessOutOfRange { p, n });
        }
        if cfg.sender_timeout == 0 || cfg.initial_receiver_timeout == 0 {
            return Err(ConfigError::ZeroTimeout);
        }
        if !topology.is_strongly_connected() {
            return Err(ConfigError::NotStronglyConnected);
        }
        let timers = (0..n)
            .map(|q| {
                if q == p.0 {
                    TimerState::new(TimerStatus::On, cfg.sender_timeout)
                } else {
                    TimerState::new(TimerStatus::Off, cfg.initial_receiver_timeout)
                }
            })
            .collect();
        Ok(MpoState {
            p,
            n,
            cfg,
            topology,
            leader: None,
            phases: vec![Phase(0); n],
            edges: EdgeWeights::zeros(n),
            arbs: vec![None; n],
            timers,
            shout: 0,
            seen: HashSet::new(),
            next_seq: 0,
            edges_version: 0,
            arb_cache: None,
            variant: Variant::Baseline,
            challenged: false,
        })
    }

    pub fn id(&self) -> ProcessId {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[must_use]
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn config(&self) -> &TimerConfig {
        &self.cfg
    }

    /// Current leader output; `None` until the first sender timeout.
    pub fn leader(&self) -> Option<ProcessId> {
        self.leader
    }

    pub fn phase(&self, q: ProcessId) -> Phase {
        self.phases[q.0]
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn edges(&self) -> &EdgeWeights {
        &self.edges
    }

    pub fn arb(&self, q: ProcessId) -> Option<&Arborescence> {
        self.arbs[q.0].as_deref()
    }

    pub fn timer(&self, q: ProcessId) -> &TimerState {
        &self.timers[q.0]
    }

    pub fn shout(&self) -> ProcessId {
        ProcessId(self.shout)
    }

    pub fn has_seen(&self, id: MessageId) -> bool {
        self.seen.contains(&id)
    }

    pub fn seen_count(&self) -> usize {
        self.seen.len()
    }

    /// Ticks every running timer by one step and reports, in ascending id
    /// order, those that reached their timeout. Fired timers stay at the
    /// firing point until [`MpoState::on_timeout`] handles them.
    pub fn advance_timers(&mut self) -> Vec<ProcessId> {
        let mut fired = Vec::new();
        for (q, t) in self.timers.iter_mut().enumerate() {
            if t.is_on() {
                t.elapsed += 1;
                if t.elapsed >= t.timeout {
                    fired.push(ProcessId(q));
                }
            }
        }
        fired
    }

    /// Dispatches a fired timer to the sender or receiver handler.
    pub fn on_timeout(&mut self, q: ProcessId, now: Step) -> Vec<Packet> {
        if q == self.p {
            self.on_sender_timeout(now)
        } else {
            self.on_receiver_timeout(q, now)
        }
    }

    /// Own timer expired: re-evaluate leadership, then either start/stop a
    /// phase or, while leading, emit the next `Alive`.
    pub fn on_sender_timeout(&mut self, now: Step) -> Vec<Packet> {
        let p = self.p;
        let new_arb = self.own_arborescence();

        let mut best = (new_arb.weight(), p);
        for (r, arb) in self.arbs.iter().enumerate() {
            if r == p.0 || !self.timers[r].is_on() {
                continue;
            }
            if let Some(arb) = arb {
                best = best.min((arb.weight(), ProcessId(r)));
            }
        }
        let new_leader = best.1;

        let mut out = Vec::new();
        if self.leader != Some(new_leader) {
            if new_leader == p {
                self.arbs[p.0] = Some(Arc::clone(&new_arb));
                let msg = Message::StartPhase {
                    origin: p,
                    phase: self.phases[p.0],
                    arb: new_arb,
                };
                let targets = self.neighbors();
                out.extend(self.originate(msg, &targets, now));
            }
            if self.leader == Some(p) {
                self.phases[p.0] = self.phases[p.0].next();
                let msg = Message::StopPhase {
                    origin: p,
                    phase: self.phases[p.0],
                };
                let targets = self.neighbors();
                out.extend(self.originate(msg, &targets, now));
            }
            self.leader = Some(new_leader);
        } else if self.leader == Some(p) && self.should_reannounce(&new_arb) {
            self.arbs[p.0] = Some(Arc::clone(&new_arb));
            let msg = Message::StartPhase {
                origin: p,
                phase: self.phases[p.0],
                arb: new_arb,
            };
            let targets = self.neighbors();
            out.extend(self.originate(msg, &targets, now));
        } else if self.leader == Some(p) {
            self.shout = (self.shout + 1) % self.n;
            let shout = ProcessId(self.shout);
            let msg = Message::Alive {
                origin: p,
                phase: self.phases[p.0],
                shout,
            };
            let targets = if shout != p {
                self.arbs[p.0]
                    .as_ref()
                    .map(|a| a.children(p).collect())
                    .unwrap_or_default()
            } else {
                self.neighbors()
            };
            out.extend(self.originate(msg, &targets, now));
        }
        self.timers[p.0].reset();
        self.challenged = false;
        out
    }

    fn should_reannounce(&self, new_arb: &Arc<Arborescence>) -> bool {
        self.variant == Variant::Rebroadcast
            && (self.challenged || self.arbs[self.p.0].as_ref() != Some(new_arb))
    }

    /// Receiver timer for `q` expired: blame our parent in `q`'s
    /// arborescence, lengthen the timer and leave it off until the next
    /// `StartPhase` or `Alive` from `q` re-arms it.
    pub fn on_receiver_timeout(&mut self, q: ProcessId, now: Step) -> Vec<Packet> {
        debug_assert_ne!(q, self.p);
        let p = self.p;
        // an origin whose tree we do not know (or that misses us) is blamed directly
        let parent = self.arbs[q.0]
            .as_ref()
            .and_then(|a| a.parent(p))
            .unwrap_or(q);
        let msg = Message::Failed {
            origin: q,
            reporter: p,
            parent,
        };
        let targets = self.neighbors();
        let out = self.originate(msg, &targets, now);
        let t = &mut self.timers[q.0];
        t.timeout = t.timeout.saturating_add(self.cfg.timeout_increment);
        t.stop();
        out
    }

    /// Handles a packet addressed to this process. Only the first packet of
    /// each message is acted on; later copies are discarded.
    pub fn on_receive(&mut self, pkt: &Packet, now: Step) -> Vec<Packet> {
        let p = self.p;
        if pkt.to != p || !self.seen.insert(pkt.msg_id) {
            return Vec::new();
        }
        if self.leader == Some(p) {
            match pkt.payload {
                Message::StartPhase { origin, .. } | Message::Alive { origin, .. } => {
                    self.challenged |= origin != p;
                }
                // someone lost our stream
                Message::Failed { origin, .. } => self.challenged |= origin == p,
                Message::StopPhase { .. } => {}
            }
        }
        match &pkt.payload {
            Message::StartPhase { origin, phase, arb } => {
                let q = *origin;
                if q != p && self.phases[q.0] <= *phase {
                    self.arbs[q.0] = Some(Arc::clone(arb));
                    self.phases[q.0] = *phase;
                    self.timers[q.0].reset();
                    let targets = self.neighbors();
                    return self.forward(pkt, &targets, now);
                }
            }
            Message::StopPhase { origin, phase } => {
                let q = *origin;
                if q != p && self.phases[q.0] < *phase {
                    self.phases[q.0] = *phase;
                    self.timers[q.0].stop();
                    let targets = self.neighbors();
                    return self.forward(pkt, &targets, now);
                }
            }
            Message::Alive {
                origin,
                phase,
                shout,
            } => {
                let q = *origin;
                if q != p && self.phases[q.0] == *phase {
                    let parent = self.arbs[q.0].as_ref().and_then(|a| a.parent(p));
                    if parent == Some(pkt.from) {
                        let targets: Vec<ProcessId> = if *shout != p {
                            self.arbs[q.0]
                                .as_ref()
                                .map(|a| a.children(p).collect())
                                .unwrap_or_default()
                        } else {
                            self.neighbors()
                        };
                        self.timers[q.0].reset();
                        return self.forward(pkt, &targets, now);
                    } else if !self.timers[q.0].is_on() {
                        self.timers[q.0].reset();
                    }
                }
            }
            Message::Failed {
                origin,
                reporter,
                parent,
            } => {
                if *origin == p {
                    self.edges.increment(*parent, *reporter);
                    self.edges_version += 1;
                } else {
                    let targets = self.neighbors();
                    return self.forward(pkt, &targets, now);
                }
            }
        }
        Vec::new()
    }

    fn neighbors(&self) -> Vec<ProcessId> {
        self.topology.out_neighbors(self.p).collect()
    }

    fn own_arborescence(&mut self) -> Arc<Arborescence> {
        if let Some((version, arb)) = &self.arb_cache {
            if *version == self.edges_version {
                return Arc::clone(arb);
            }
        }
        let g = WeightedDigraph::with_topology(&self.edges, &self.topology);
        let arb = Arc::new(
            min_arborescence(&g, self.p).expect("topology checked strongly connected"),
        );
        self.arb_cache = Some((self.edges_version, Arc::clone(&arb)));
        arb
    }

    fn originate(&mut self, payload: Message, targets: &[ProcessId], now: Step) -> Vec<Packet> {
        let msg_id = MessageId {
            origin: self.p,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.seen.insert(msg_id);
        targets
            .iter()
            .map(|&to| Packet {
                msg_id,
                payload: payload.clone(),
                from: self.p,
                to,
                sent_step: now,
            })
            .collect()
    }

    fn forward(&self, pkt: &Packet, targets: &[ProcessId], now: Step) -> Vec<Packet> {
        targets
            .iter()
            .map(|&to| Packet {
                msg_id: pkt.msg_id,
                payload: pkt.payload.clone(),
                from: self.p,
                to,
                sent_step: now,
            })
            .collect()
    }
}
