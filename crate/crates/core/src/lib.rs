//! Message- and packet-efficient Omega failure detector.
//!
//! - [`protocol`]: the per-process state machine ([`MpoState`]).
//! - [`arborescence`]: minimum-weight spanning arborescences and a brute-force oracle.
//! - [`netsim`]: seeded discrete-event simulator with adversarial channel models.
//! - [`audit`]: trace analyzers for convergence and efficiency.
//! - [`montecarlo`]: random-digraph leader existence and stability experiments.
//!
//! The graph and estimator code is generic over its scalar type (see
//! [`num`]); the aliases below fix the types the protocol and simulator use.

pub mod arborescence;
pub mod audit;
pub mod montecarlo;
pub mod netsim;
pub mod num;
pub mod protocol;
pub mod topology;
pub mod types;

/// Fault weights carried by the protocol.
pub type Weight = u64;
pub type EdgeWeights = arborescence::EdgeWeights<Weight>;
pub type Arborescence = arborescence::Arborescence<Weight>;
pub type WeightedDigraph<'a> = arborescence::WeightedDigraph<'a, Weight>;
pub type Estimate = montecarlo::Estimate<f64>;
pub type StabilityEstimate = montecarlo::StabilityEstimate<f64>;

pub use protocol::{init_state, Message, MessageKind, MpoState, Packet, TimerConfig, Variant};
pub use topology::Topology;
pub use types::{MessageId, Phase, ProcessId, Step};
