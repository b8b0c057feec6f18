//! Simulation input and its TOML schema.
//!
//! ```toml
//! n = 3
//! seed = 7
//! horizon = 20000
//! expected_leader = 0            # optional, recorded in the trace
//! late_delay = { min = 9, max = 18 }  # optional, delay of non-timely deliveries
//! crashes = [{ process = 2, step = 500 }]
//! variant = "rebroadcast"        # optional, "baseline" by default
//!
//! [timers]
//! sender_timeout = 16
//! initial_receiver_timeout = 8
//! timeout_increment = 1
//!
//! [channels]
//! default = { kind = "timely", b = 4 }
//! pairs = [
//!   { from = 1, to = 0, model = { kind = "fair_lossy", policy = { type = "drop_pattern", d = 2 } } },
//!   { from = 2, to = 0, model = { kind = "lossy" } },
//! ]
//! # per-origin override: packets of messages created by `origin`
//! overrides = [
//!   { from = 0, to = 2, origin = 1, model = { kind = "strongly_non_timely", burst = 8 } },
//! ]
//!
//! [topology]                     # optional, complete when absent
//! edges = [[0, 1], [1, 2], [2, 0]]
//!
//! [mode]                         # optional
//! kind = "general_propagation"
//! reliability = 0.9
//! timeliness = 0.5
//! b = 4
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::protocol::{TimerConfig, Variant};
use crate::topology::Topology;
use crate::types::{ProcessId, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FairLossyPolicy {
    /// Drops `d` of every `d + 1` packets of each (kind, origin) stream.
    DropPattern { d: u64 },
    /// Delivers each packet independently with probability `q`.
    Probabilistic { q: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelModel {
    Timely {
        b: u64,
    },
    EventuallyTimely {
        b: u64,
        unreliable_until: Step,
    },
    FairLossy {
        policy: FairLossyPolicy,
    },
    StronglyNonTimely {
        burst: u64,
    },
    Lossy,
}

impl ChannelModel {
    /// Delay bound of the timely part, if the model has one.
    pub fn timely_bound(&self) -> Option<u64> {
        match *self {
            ChannelModel::Timely { b } | ChannelModel::EventuallyTimely { b, .. } => Some(b),
            _ => None,
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            ChannelModel::Timely { b: 0 } | ChannelModel::EventuallyTimely { b: 0, .. } => {
                Err("timely bound b must be positive".into())
            }
            ChannelModel::StronglyNonTimely { burst: 0 } => Err("burst must be positive".into()),
            ChannelModel::FairLossy {
                policy: FairLossyPolicy::Probabilistic { q },
            } if !(*q > 0.0 && *q <= 1.0) => {
                Err(format!("fair-lossy q must be in (0, 1], got {q}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairModel {
    pub from: ProcessId,
    pub to: ProcessId,
    pub model: ChannelModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginOverride {
    pub from: ProcessId,
    pub to: ProcessId,
    pub origin: ProcessId,
    pub model: ChannelModel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub default: Option<ChannelModel>,
    pub pairs: Vec<PairModel>,
    pub overrides: Vec<OriginOverride>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crash {
    pub process: ProcessId,
    pub step: Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateDelay {
    pub min: u64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    #[default]
    DependableChannels,
    /// Every message samples its own reliable graph R (each edge with
    /// probability `reliability`) and timely graph T within R (each edge of
    /// R with probability `timeliness`). T edges deliver within `b` steps.
    GeneralPropagation {
        reliability: f64,
        timeliness: f64,
        b: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    pub seed: u64,
    pub horizon: Step,
    #[serde(default)]
    pub timers: TimerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_leader: Option<ProcessId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub late_delay: Option<LateDelay>,
    #[serde(default)]
    pub crashes: Vec<Crash>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub channels: ChannelSpec,
    #[serde(default, skip_serializing_if = "Variant::is_baseline")]
    pub variant: Variant,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl Scenario {
    /// Scenario over `n` processes with every channel `model`.
    pub fn uniform(n: usize, model: ChannelModel, seed: u64, horizon: Step) -> Self {
        Scenario {
            n,
            seed,
            horizon,
            timers: TimerConfig::default(),
            expected_leader: None,
            late_delay: None,
            crashes: Vec::new(),
            mode: Mode::DependableChannels,
            topology: None,
            channels: ChannelSpec {
                default: Some(model),
                ..ChannelSpec::default()
            },
            variant: Variant::Baseline,
        }
    }

    pub fn from_toml_str(src: &str) -> Result<Self, ScenarioError> {
        let scn: Scenario = toml::from_str(src).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(src, s.start))
                .unwrap_or((1, 1));
            ScenarioError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always representable in TOML")
    }

    /// Short hash of the full configuration, seed included.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn topology(&self) -> Topology {
        match &self.topology {
            Some(t) => Topology::from_edges(self.n, t.edges.iter().copied()),
            None => Topology::complete(self.n),
        }
    }

    /// Model of channel `from -> to` for messages created by `origin`.
    pub fn channel(&self, from: ProcessId, to: ProcessId, origin: ProcessId) -> Option<&ChannelModel> {
        self.channels
            .overrides
            .iter()
            .find(|o| o.from == from && o.to == to && o.origin == origin)
            .map(|o| &o.model)
            .or_else(|| self.base_channel(from, to))
    }

    pub fn base_channel(&self, from: ProcessId, to: ProcessId) -> Option<&ChannelModel> {
        self.channels
            .pairs
            .iter()
            .find(|pm| pm.from == from && pm.to == to)
            .map(|pm| &pm.model)
            .or(self.channels.default.as_ref())
    }

    /// Largest timely delay bound `B` appearing in the scenario (1 if none).
    pub fn timely_bound(&self) -> u64 {
        let from_channels = self
            .channels
            .default
            .iter()
            .chain(self.channels.pairs.iter().map(|p| &p.model))
            .chain(self.channels.overrides.iter().map(|o| &o.model))
            .filter_map(ChannelModel::timely_bound);
        let from_mode = match self.mode {
            Mode::GeneralPropagation { b, .. } => Some(b),
            Mode::DependableChannels => None,
        };
        from_channels.chain(from_mode).max().unwrap_or(1)
    }

    /// Delay range for packets that are delivered but not timely. Defaults to
    /// starting just past `B * (n - 1)` so that a late copy never overtakes a
    /// timely multi-hop path.
    pub fn late_delay(&self) -> LateDelay {
        self.late_delay.unwrap_or_else(|| {
            let min = self.timely_bound() * (self.n as u64 - 1) + 1;
            LateDelay { min, max: 2 * min }
        })
    }

    pub fn crash_step(&self, p: ProcessId) -> Option<Step> {
        self.crashes.iter().find(|c| c.process == p).map(|c| c.step)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        let n = self.n;
        if n < 2 {
            return bad(format!("n must be at least 2, got {n}"));
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.timers.sender_timeout == 0 || self.timers.initial_receiver_timeout == 0 {
            return bad("timer lengths must be positive".into());
        }
        let in_range = |p: ProcessId| p.0 < n;
        if let Some(l) = self.expected_leader {
            if !in_range(l) {
                return bad(format!("expected_leader {l} out of range"));
            }
        }
        if let Some(ld) = self.late_delay {
            if ld.min == 0 || ld.min > ld.max {
                return bad(format!("late_delay needs 1 <= min <= max, got {}..{}", ld.min, ld.max));
            }
        }
        let mut crashed = HashSet::new();
        for c in &self.crashes {
            if !in_range(c.process) {
                return bad(format!("crash of process {} out of range", c.process));
            }
            if c.step > self.horizon {
                return bad(format!("crash step {} beyond horizon {}", c.step, self.horizon));
            }
            if !crashed.insert(c.process) {
                return bad(format!("process {} crashes twice", c.process));
            }
        }
        if let Some(t) = &self.topology {
            if let Some(&(a, b)) = t.edges.iter().find(|&&(a, b)| a >= n || b >= n || a == b) {
                return bad(format!("topology edge ({a}, {b}) invalid"));
            }
        }
        let topo = self.topology();
        if !topo.is_strongly_connected() {
            return bad("topology must be strongly connected".into());
        }

        let mut pairs = HashSet::new();
        for pm in &self.channels.pairs {
            if !in_range(pm.from) || !in_range(pm.to) || pm.from == pm.to {
                return bad(format!("channel {} -> {} invalid", pm.from, pm.to));
            }
            if !pairs.insert((pm.from, pm.to)) {
                return bad(format!("channel {} -> {} listed twice", pm.from, pm.to));
            }
            pm.model.check().or_else(|m| bad(format!("channel {} -> {}: {m}", pm.from, pm.to)))?;
        }
        let mut overrides = HashSet::new();
        for o in &self.channels.overrides {
            if !in_range(o.from) || !in_range(o.to) || !in_range(o.origin) || o.from == o.to {
                return bad(format!("override {} -> {} / {} invalid", o.from, o.to, o.origin));
            }
            if !overrides.insert((o.from, o.to, o.origin)) {
                return bad(format!("override {} -> {} / {} listed twice", o.from, o.to, o.origin));
            }
            o.model.check().or_else(|m| bad(format!("override {} -> {}: {m}", o.from, o.to)))?;
        }
        if let Some(d) = &self.channels.default {
            d.check().or_else(|m| bad(format!("default channel: {m}")))?;
        }

        match self.mode {
            Mode::DependableChannels => {
                for a in 0..n {
                    for b in 0..n {
                        let (a, b) = (ProcessId(a), ProcessId(b));
                        if topo.has_edge(a, b) && self.base_channel(a, b).is_none() {
                            return bad(format!("no channel model for {a} -> {b}"));
                        }
                    }
                }
            }
            Mode::GeneralPropagation {
                reliability,
                timeliness,
                b,
            } => {
                if !(0.0..=1.0).contains(&reliability) || !(0.0..=1.0).contains(&timeliness) {
                    return bad("propagation probabilities must lie in [0, 1]".into());
                }
                if b == 0 {
                    return bad("propagation bound b must be positive".into());
                }
            }
        }
        Ok(())
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}
