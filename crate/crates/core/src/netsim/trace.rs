//! Run records and their JSON-lines encoding.
//!
//! A trace file is one `{"t":"meta",...}` line, one line per event, and a
//! closing `{"t":"final","leaders":[...]}` line. A file without the final
//! line is treated as truncated.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{MessageKind, TimerConfig};
use crate::types::{MessageId, Phase, ProcessId, Step};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum TraceEvent {
    Send {
        step: Step,
        mid: MessageId,
        kind: MessageKind,
        from: ProcessId,
        to: ProcessId,
    },
    Deliver {
        step: Step,
        mid: MessageId,
        from: ProcessId,
        to: ProcessId,
    },
    Drop {
        step: Step,
        mid: MessageId,
        from: ProcessId,
        to: ProcessId,
    },
    /// `timeout` is the timer length that just elapsed.
    Timer {
        step: Step,
        proc: ProcessId,
        subject: ProcessId,
        timeout: u64,
    },
    Leader {
        step: Step,
        proc: ProcessId,
        old: Option<ProcessId>,
        new: Option<ProcessId>,
    },
    Crash {
        step: Step,
        proc: ProcessId,
    },
    Phase {
        step: Step,
        proc: ProcessId,
        origin: ProcessId,
        phase: Phase,
    },
}

impl TraceEvent {
    pub fn step(&self) -> Step {
        match *self {
            TraceEvent::Send { step, .. }
            | TraceEvent::Deliver { step, .. }
            | TraceEvent::Drop { step, .. }
            | TraceEvent::Timer { step, .. }
            | TraceEvent::Leader { step, .. }
            | TraceEvent::Crash { step, .. }
            | TraceEvent::Phase { step, .. } => step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub fingerprint: String,
    pub n: usize,
    pub horizon: Step,
    pub seed: u64,
    pub timers: TimerConfig,
    pub timely_bound: u64,
    pub expected_leader: Option<ProcessId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub events: Vec<TraceEvent>,
    pub final_leaders: Vec<Option<ProcessId>>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace is empty")]
    Empty,
    #[error("trace is truncated: no final line after line {0}")]
    Truncated(usize),
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    t: String,
    #[serde(flatten)]
    meta: TraceMeta,
}

#[derive(Serialize, Deserialize)]
struct FinalLine {
    t: String,
    leaders: Vec<Option<ProcessId>>,
}

const FINAL_PREFIX: &str = "{\"t\":\"final\"";

impl Trace {
    /// Processes that never crash during the run.
    pub fn correct(&self) -> Vec<bool> {
        let mut correct = vec![true; self.meta.n];
        for e in &self.events {
            if let TraceEvent::Crash { proc, .. } = *e {
                correct[proc.0] = false;
            }
        }
        correct
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let line = MetaLine {
            t: "meta".into(),
            meta: self.meta.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        let fin = FinalLine {
            t: "final".into(),
            leaders: self.final_leaders.clone(),
        };
        serde_json::to_writer(&mut w, &fin)?;
        w.write_all(b"\n")?;
        w.flush()
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut lines = r.lines().enumerate();
        let parse_err = |line: usize, e: serde_json::Error| TraceError::Parse {
            line: line + 1,
            message: e.to_string(),
        };
        let (i, first) = lines.next().ok_or(TraceError::Empty)?;
        let first = first?;
        let meta: MetaLine = serde_json::from_str(&first).map_err(|e| parse_err(i, e))?;
        if meta.t != "meta" {
            return Err(TraceError::Parse {
                line: 1,
                message: format!("expected meta line, found \"{}\"", meta.t),
            });
        }
        let mut events = Vec::new();
        let mut last = 1;
        for (i, line) in lines {
            let line = line?;
            last = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if line.starts_with(FINAL_PREFIX) {
                let fin: FinalLine = serde_json::from_str(&line).map_err(|e| parse_err(i, e))?;
                return Ok(Trace {
                    meta: meta.meta,
                    events,
                    final_leaders: fin.leaders,
                });
            }
            events.push(serde_json::from_str(&line).map_err(|e| parse_err(i, e))?);
        }
        Err(TraceError::Truncated(last))
    }

    pub fn from_jsonl_str(s: &str) -> Result<Trace, TraceError> {
        Trace::read_jsonl(s.as_bytes())
    }
}
