//! Trace analyzers.
//!
//! Infinitary claims ("all but finitely many") are checked on a finite run
//! as "after a cutoff step". The default cutoff is the convergence step plus
//! ten sender periods; convergence itself must hold over a trailing window,
//! by default the last fifth of the run.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::netsim::{Trace, TraceEvent};
use crate::protocol::MessageKind;
use crate::types::{MessageId, ProcessId, Step};

/// Sender periods between convergence and the default cutoff.
pub const CUTOFF_PERIODS: u64 = 10;

pub fn default_window(horizon: Step) -> Step {
    (horizon / 5).max(1)
}

/// Leader and the step from which every correct process outputs it without
/// interruption, provided that stretch lasts at least `window` steps.
pub fn detect_convergence(tr: &Trace, window: Step) -> Option<(ProcessId, Step)> {
    let correct = tr.correct();
    let mut last_change = vec![0; tr.meta.n];
    for e in &tr.events {
        if let TraceEvent::Leader { step, proc, .. } = *e {
            last_change[proc.0] = step;
        }
    }
    let mut leader = None;
    let mut since = 0;
    for p in (0..tr.meta.n).filter(|&p| correct[p]) {
        let out = tr.final_leaders.get(p).copied().flatten()?;
        if *leader.get_or_insert(out) != out {
            return None;
        }
        since = since.max(last_change[p]);
    }
    let leader = leader?;
    if !correct[leader.0] || tr.meta.horizon.saturating_sub(since) < window {
        return None;
    }
    Some((leader, since))
}

/// First-send step of every message, keyed by id.
fn first_sends(tr: &Trace) -> HashMap<MessageId, Step> {
    let mut first = HashMap::new();
    for e in &tr.events {
        if let TraceEvent::Send { step, mid, .. } = *e {
            first.entry(mid).or_insert(step);
        }
    }
    first
}

/// Creators of the messages whose first packet is sent after `cutoff`.
pub fn audit_message_efficiency(tr: &Trace, cutoff: Step) -> BTreeSet<ProcessId> {
    first_sends(tr)
        .into_iter()
        .filter(|&(_, s)| s > cutoff)
        .map(|(mid, _)| mid.origin)
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PacketStats {
    /// Messages first sent after the cutoff.
    pub messages: usize,
    pub max_packets: usize,
    pub max_alive_packets: usize,
}

/// Largest number of packets any one message first sent after `cutoff` used.
pub fn audit_packet_efficiency(tr: &Trace, cutoff: Step) -> PacketStats {
    let first = first_sends(tr);
    let mut counts: HashMap<MessageId, (MessageKind, usize)> = HashMap::new();
    for e in &tr.events {
        if let TraceEvent::Send { mid, kind, .. } = *e {
            if first[&mid] > cutoff {
                counts.entry(mid).or_insert((kind, 0)).1 += 1;
            }
        }
    }
    let mut stats = PacketStats {
        messages: counts.len(),
        ..PacketStats::default()
    };
    for &(kind, c) in counts.values() {
        stats.max_packets = stats.max_packets.max(c);
        if kind == MessageKind::Alive {
            stats.max_alive_packets = stats.max_alive_packets.max(c);
        }
    }
    stats
}

/// Distinct ordered pairs that carry at least one packet after `cutoff`.
pub fn audit_channel_usage(tr: &Trace, cutoff: Step) -> usize {
    tr.events
        .iter()
        .filter_map(|e| match *e {
            TraceEvent::Send { step, from, to, .. } if step > cutoff => Some((from, to)),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimerGrowth {
    pub process: ProcessId,
    pub subject: ProcessId,
    pub expirations: u64,
    pub final_timeout: u64,
    pub last_increase: Option<Step>,
}

/// Receiver-timer history of every (process, subject) pair at correct
/// processes. Pairs whose timer never expired keep the initial length.
pub fn timer_growth(tr: &Trace) -> Vec<TimerGrowth> {
    let correct = tr.correct();
    let inc = tr.meta.timers.timeout_increment;
    let init = tr.meta.timers.initial_receiver_timeout;
    let mut growth: BTreeMap<(ProcessId, ProcessId), TimerGrowth> = BTreeMap::new();
    for p in (0..tr.meta.n).filter(|&p| correct[p]) {
        for s in (0..tr.meta.n).filter(|&s| s != p) {
            let (process, subject) = (ProcessId(p), ProcessId(s));
            growth.insert(
                (process, subject),
                TimerGrowth {
                    process,
                    subject,
                    expirations: 0,
                    final_timeout: init,
                    last_increase: None,
                },
            );
        }
    }
    for e in &tr.events {
        if let TraceEvent::Timer {
            step,
            proc,
            subject,
            timeout,
        } = *e
        {
            if let Some(g) = growth.get_mut(&(proc, subject)) {
                g.expirations += 1;
                g.final_timeout = timeout.saturating_add(inc);
                g.last_increase = Some(step);
            }
        }
    }
    growth.into_values().collect()
}

/// `max(initial, TO + B(n-1) + increment)`.
pub fn timer_bound(tr: &Trace) -> u64 {
    let t = &tr.meta.timers;
    let relay = tr.meta.timely_bound * (tr.meta.n as u64 - 1);
    t.initial_receiver_timeout
        .max(t.sender_timeout + relay + t.timeout_increment)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimerBoundReport {
    pub subject: ProcessId,
    pub bound: u64,
    /// Growth of the subject's timer at every other correct process.
    pub timers: Vec<TimerGrowth>,
    pub within_bound: bool,
    /// No timer for the subject grew during the trailing window.
    pub settled: bool,
}

/// Checks that timers for `subject` stop growing before `horizon - window`
/// and end within [`timer_bound`].
pub fn audit_timer_bound(tr: &Trace, subject: ProcessId, window: Step) -> TimerBoundReport {
    let bound = timer_bound(tr);
    let quiet_from = tr.meta.horizon.saturating_sub(window);
    let timers: Vec<TimerGrowth> = timer_growth(tr)
        .into_iter()
        .filter(|g| g.subject == subject)
        .collect();
    TimerBoundReport {
        subject,
        bound,
        within_bound: timers.iter().all(|g| g.final_timeout <= bound),
        settled: timers
            .iter()
            .all(|g| g.last_increase.is_none_or(|s| s <= quiet_from)),
        timers,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AuditConfig {
    /// Stability window; defaults to the last fifth of the run.
    pub window: Option<Step>,
    /// Defaults to convergence plus ten sender periods.
    pub cutoff: Option<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub fingerprint: String,
    pub n: usize,
    pub horizon: Step,
    pub converged: bool,
    pub leader: Option<ProcessId>,
    pub expected_leader: Option<ProcessId>,
    pub convergence_step: Option<Step>,
    pub window: Step,
    pub cutoff: Option<Step>,
    pub origins_after_cutoff: Vec<ProcessId>,
    pub message_efficient: bool,
    pub messages_after_cutoff: usize,
    pub max_packets_per_message_after_cutoff: usize,
    pub max_alive_packets_after_cutoff: usize,
    pub packet_bound: usize,
    pub packet_efficient: bool,
    pub channels_used_after_cutoff: usize,
    pub timer_bound: u64,
    pub timer_growth: Vec<TimerGrowth>,
    pub pass: bool,
}

/// Runs every analyzer. Without an explicit cutoff the efficiency checks
/// need a converged run.
pub fn audit(tr: &Trace, cfg: &AuditConfig) -> AuditReport {
    let n = tr.meta.n;
    let window = cfg.window.unwrap_or_else(|| default_window(tr.meta.horizon));
    let conv = detect_convergence(tr, window);
    let cutoff = cfg.cutoff.or_else(|| {
        conv.map(|(_, s)| s + CUTOFF_PERIODS * tr.meta.timers.sender_timeout)
    });
    let packet_bound = 2 * (n - 1);

    let (origins, stats, channels) = match cutoff {
        Some(c) => (
            audit_message_efficiency(tr, c).into_iter().collect::<Vec<_>>(),
            audit_packet_efficiency(tr, c),
            audit_channel_usage(tr, c),
        ),
        None => (Vec::new(), PacketStats::default(), 0),
    };
    let leader = conv.map(|(l, _)| l);
    let message_efficient = cutoff.is_some() && leader.is_some() && origins == [leader.unwrap()];
    let packet_efficient = cutoff.is_some() && stats.max_packets <= packet_bound;
    AuditReport {
        fingerprint: tr.meta.fingerprint.clone(),
        n,
        horizon: tr.meta.horizon,
        converged: conv.is_some(),
        leader,
        expected_leader: tr.meta.expected_leader,
        convergence_step: conv.map(|(_, s)| s),
        window,
        cutoff,
        origins_after_cutoff: origins,
        message_efficient,
        messages_after_cutoff: stats.messages,
        max_packets_per_message_after_cutoff: stats.max_packets,
        max_alive_packets_after_cutoff: stats.max_alive_packets,
        packet_bound,
        packet_efficient,
        channels_used_after_cutoff: channels,
        timer_bound: timer_bound(tr),
        timer_growth: timer_growth(tr),
        pass: conv.is_some() && message_efficient && packet_efficient,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::TraceMeta;
    use crate::protocol::TimerConfig;

    fn pid(i: usize) -> ProcessId {
        ProcessId(i)
    }

    fn trace(n: usize, horizon: Step, events: Vec<TraceEvent>, leaders: Vec<Option<usize>>) -> Trace {
        Trace {
            meta: TraceMeta {
                fingerprint: "x".into(),
                n,
                horizon,
                seed: 0,
                timers: TimerConfig::default(),
                timely_bound: 2,
                expected_leader: None,
            },
            events,
            final_leaders: leaders.into_iter().map(|l| l.map(ProcessId)).collect(),
        }
    }

    fn leader(step: Step, p: usize, new: usize) -> TraceEvent {
        TraceEvent::Leader {
            step,
            proc: pid(p),
            old: None,
            new: Some(pid(new)),
        }
    }

    fn send(step: Step, origin: usize, seq: u64, kind: MessageKind, from: usize, to: usize) -> TraceEvent {
        TraceEvent::Send {
            step,
            mid: MessageId {
                origin: pid(origin),
                seq,
            },
            kind,
            from: pid(from),
            to: pid(to),
        }
    }

    #[test]
    fn agreement_from_step_100() {
        let tr = trace(
            3,
            10_000,
            vec![leader(40, 0, 0), leader(100, 0, 2), leader(90, 1, 2), leader(70, 2, 2)],
            vec![Some(2), Some(2), Some(2)],
        );
        assert_eq!(detect_convergence(&tr, 2000), Some((pid(2), 100)));
        assert_eq!(detect_convergence(&tr, 9950), None);
    }

    #[test]
    fn oscillation_never_converges() {
        let events = (1..=100)
            .map(|i| leader(i * 100, 1, (i % 2) as usize))
            .collect();
        let tr = trace(2, 10_000, events, vec![Some(0), Some(1)]);
        assert_eq!(detect_convergence(&tr, 2000), None);
    }

    #[test]
    fn crashed_processes_are_ignored_but_cannot_lead() {
        let crash = TraceEvent::Crash {
            step: 50,
            proc: pid(2),
        };
        let tr = trace(
            3,
            1000,
            vec![leader(10, 0, 0), leader(10, 1, 0), crash.clone()],
            vec![Some(0), Some(0), Some(1)],
        );
        assert_eq!(detect_convergence(&tr, 100), Some((pid(0), 10)));
        let tr = trace(
            3,
            1000,
            vec![leader(10, 0, 2), leader(10, 1, 2), crash],
            vec![Some(2), Some(2), Some(2)],
        );
        assert_eq!(detect_convergence(&tr, 100), None);
    }

    #[test]
    fn undecided_process_blocks_convergence() {
        let tr = trace(2, 1000, vec![leader(10, 0, 0)], vec![Some(0), None]);
        assert_eq!(detect_convergence(&tr, 100), None);
    }

    #[test]
    fn efficiency_counts_after_cutoff() {
        use MessageKind::*;
        let mut events = vec![
            send(5, 1, 0, StartPhase, 1, 0),
            send(5, 1, 0, StartPhase, 1, 2),
            send(7, 1, 0, StartPhase, 0, 2),
        ];
        // an Alive of 0 over a path, then a shout round
        events.extend([
            send(20, 0, 3, Alive, 0, 1),
            send(21, 0, 3, Alive, 1, 2),
            send(40, 0, 4, Alive, 0, 1),
            send(41, 0, 4, Alive, 1, 0),
            send(41, 0, 4, Alive, 1, 2),
        ]);
        let tr = trace(3, 100, events, vec![Some(0); 3]);
        assert_eq!(
            audit_message_efficiency(&tr, 0),
            [pid(0), pid(1)].into_iter().collect()
        );
        assert_eq!(audit_message_efficiency(&tr, 10), [pid(0)].into_iter().collect());
        assert!(audit_message_efficiency(&tr, 100).is_empty());
        // a broadcast that started before the cutoff does not count
        assert_eq!(audit_message_efficiency(&tr, 6), [pid(0)].into_iter().collect());
        let stats = audit_packet_efficiency(&tr, 10);
        assert_eq!(stats.messages, 2);
        assert_eq!(stats.max_alive_packets, 3);
        assert_eq!(audit_packet_efficiency(&tr, 30).max_alive_packets, 3);
        assert_eq!(audit_packet_efficiency(&tr, 0).max_packets, 3);
        assert_eq!(audit_channel_usage(&tr, 10), 3);
        assert_eq!(audit_channel_usage(&tr, 0), 4);
    }

    #[test]
    fn timer_growth_tracks_expirations() {
        let fire = |step, proc: usize, subject: usize, timeout| TraceEvent::Timer {
            step,
            proc: pid(proc),
            subject: pid(subject),
            timeout,
        };
        let tr = trace(
            3,
            1000,
            vec![
                fire(16, 0, 0, 16),
                fire(30, 1, 0, 8),
                fire(60, 1, 0, 9),
                fire(70, 2, 1, 8),
            ],
            vec![Some(0); 3],
        );
        let r = audit_timer_bound(&tr, pid(0), 200);
        assert_eq!(r.bound, 16 + 2 * 2 + 1);
        assert_eq!(r.timers.len(), 2);
        let at1 = r.timers.iter().find(|g| g.process == pid(1)).unwrap();
        assert_eq!((at1.expirations, at1.final_timeout, at1.last_increase), (2, 10, Some(60)));
        let at2 = r.timers.iter().find(|g| g.process == pid(2)).unwrap();
        assert_eq!((at2.expirations, at2.final_timeout), (0, 8));
        assert!(r.within_bound && r.settled);
        assert!(!audit_timer_bound(&tr, pid(0), 950).settled);
    }

    #[test]
    fn audit_is_pure() {
        let tr = trace(2, 100, vec![leader(1, 0, 0), leader(1, 1, 0)], vec![Some(0); 2]);
        let cfg = AuditConfig::default();
        assert_eq!(audit(&tr, &cfg), audit(&tr, &cfg));
    }
}
