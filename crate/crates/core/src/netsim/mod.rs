//! Seeded discrete-event simulator.
//!
//! One loop iteration is one global step: scheduled crashes, then every
//! delivery due at this step in (recipient, send order), then every live
//! process ticks its timers and handles the fired ones in (process,
//! subject) order, and packets emitted along the way are routed through
//! their channel's adversary. Everything random flows from the scenario
//! seed, so a trace is a function of its scenario.

mod channel;
mod engine;
mod preset;
mod scenario;
mod trace;

pub use channel::{schedule_delivery, ChannelState, Delivery};
pub use engine::{run, PropagationGraphs};
pub use preset::{
    is_eventually_timely, is_fair_lossy, preset_dependable, preset_dependable_with, reachable_over,
    PresetOptions,
};
pub use scenario::{
    ChannelModel, ChannelSpec, Crash, FairLossyPolicy, LateDelay, Mode, OriginOverride, PairModel,
    Scenario, ScenarioError, TopologySpec,
};
pub use trace::{Trace, TraceError, TraceEvent, TraceMeta};
