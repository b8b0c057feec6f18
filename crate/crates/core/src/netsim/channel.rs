//! Per-channel delivery adversaries.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::scenario::{ChannelModel, FairLossyPolicy, LateDelay};
use crate::protocol::{MessageKind, Packet};
use crate::types::{ProcessId, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    At(Step),
    Dropped,
}

/// Longest delivery-free window a strongly non-timely channel ever opens,
/// as a power of two times its burst.
const MAX_WINDOW_EXP: u32 = 20;

/// Mutable state of one directed channel (or one per-origin override).
#[derive(Debug, Clone)]
pub struct ChannelState {
    model: ChannelModel,
    late: LateDelay,
    rng: ChaCha8Rng,
    // packets seen so far per (kind, creator) stream, for drop patterns
    streams: HashMap<(MessageKind, ProcessId), u64>,
    windows: Vec<(Step, Step)>,
    window_cursor: Step,
    window_cycle: u32,
    window_index: u32,
}

impl ChannelState {
    pub fn new(model: ChannelModel, late: LateDelay, mut rng: ChaCha8Rng) -> Self {
        let window_cursor = match model {
            ChannelModel::StronglyNonTimely { burst } => rng.gen_range(0..=4 * burst),
            _ => 0,
        };
        ChannelState {
            model,
            late,
            rng,
            streams: HashMap::new(),
            windows: Vec::new(),
            window_cursor,
            window_cycle: 0,
            window_index: 0,
        }
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    /// Decides the fate of one packet of the given stream sent at `send_step`.
    pub fn schedule(&mut self, kind: MessageKind, origin: ProcessId, send_step: Step) -> Delivery {
        match self.model {
            ChannelModel::Timely { b } => Delivery::At(send_step + self.rng.gen_range(1..=b)),
            ChannelModel::EventuallyTimely {
                b,
                unreliable_until,
            } => {
                if send_step < unreliable_until {
                    if self.rng.gen_bool(0.5) {
                        Delivery::Dropped
                    } else {
                        Delivery::At(send_step + self.rng.gen_range(1..=4 * b))
                    }
                } else {
                    Delivery::At(send_step + self.rng.gen_range(1..=b))
                }
            }
            ChannelModel::FairLossy { ref policy } => {
                let deliver = match *policy {
                    FairLossyPolicy::DropPattern { d } => {
                        let k = self.streams.entry((kind, origin)).or_insert(0);
                        *k += 1;
                        *k % (d + 1) == 0
                    }
                    FairLossyPolicy::Probabilistic { q } => self.rng.gen_bool(q),
                };
                if deliver {
                    Delivery::At(send_step + self.late_delay())
                } else {
                    Delivery::Dropped
                }
            }
            ChannelModel::StronglyNonTimely { burst } => {
                let t = send_step + self.late_delay();
                Delivery::At(self.after_windows(t, burst))
            }
            ChannelModel::Lossy => Delivery::Dropped,
        }
    }

    fn late_delay(&mut self) -> u64 {
        self.rng.gen_range(self.late.min..=self.late.max)
    }

    /// Pushes `t` past any delivery-free window covering it. Windows come in
    /// cycles: cycle `c` opens windows of `burst * 2^j` steps for
    /// `j = 0..=c`, each after a seeded gap, so every length recurs.
    fn after_windows(&mut self, t: Step, burst: u64) -> Step {
        while self.window_cursor <= t {
            let gap = self.rng.gen_range(burst..=4 * burst);
            let len = burst << self.window_index.min(MAX_WINDOW_EXP);
            let start = self.window_cursor + gap;
            self.windows.push((start, start + len));
            self.window_cursor = start + len;
            if self.window_index >= self.window_cycle {
                self.window_cycle += 1;
                self.window_index = 0;
            } else {
                self.window_index += 1;
            }
        }
        let i = self.windows.partition_point(|&(_, end)| end <= t);
        match self.windows.get(i) {
            Some(&(start, end)) if start <= t => end,
            _ => t,
        }
    }

    /// Delivery-free windows generated so far, as half-open step ranges.
    pub fn windows(&self) -> &[(Step, Step)] {
        &self.windows
    }
}

/// Routes `pkt` through `channel` as sent at `send_step`.
pub fn schedule_delivery(channel: &mut ChannelState, pkt: &Packet, send_step: Step) -> Delivery {
    channel.schedule(pkt.payload.kind(), pkt.msg_id.origin, send_step)
}
