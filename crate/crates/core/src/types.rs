//! Identifiers shared by the protocol, the simulator and the auditors.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Global computation step index.
pub type Step = u64;

/// Process identifier in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub usize);

impl ProcessId {
    #[inline]
    pub const fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for ProcessId {
    fn from(v: usize) -> Self {
        ProcessId(v)
    }
}

/// Per-origin epoch number.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Phase(pub u64);

impl Phase {
    #[must_use]
    pub const fn next(self) -> Phase {
        Phase(self.0 + 1)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Network-wide identity of one message instance: the creating process and
/// its private sequence counter. Every packet carrying the same message
/// carries the same id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, u64)", into = "(usize, u64)")]
pub struct MessageId {
    pub origin: ProcessId,
    pub seq: u64,
}

impl From<(usize, u64)> for MessageId {
    fn from((origin, seq): (usize, u64)) -> Self {
        MessageId {
            origin: ProcessId(origin),
            seq,
        }
    }
}

impl From<MessageId> for (usize, u64) {
    fn from(m: MessageId) -> Self {
        (m.origin.0, m.seq)
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin, self.seq)
    }
}
