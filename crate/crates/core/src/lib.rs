//! Deterministic discrete-event building evacuation simulator.
//!
//! Three routing policies are provided and compared:
//!
//! - **DSP**: hazard-aware Dijkstra shortest path, re-evaluated at every vertex.
//! - **CPNST**: Cognitive Packet Network routing with a time metric. Smart
//!   packets explore the building, acknowledgements reinforce per-node random
//!   neural networks and fill ranked route mailboxes that evacuees follow.
//! - **CPNST&TD**: a planning run with CPNST, after which every simulated
//!   casualty is re-routed by a time-dependent Dijkstra search over the
//!   recorded occupancy and hazard timeline; the resulting routes are then
//!   executed open-loop (source routed).
//!
//! All randomness flows from explicit seeds through [`seeds`], so every run is
//! bit-reproducible.

pub mod analytics;
pub mod cpn;
pub mod engine;
mod error;
pub mod hazard;
pub mod oracle;
pub mod pipeline;
pub mod report;
pub mod routing;
pub mod scenario;
pub mod seeds;

pub use error::{Error, Result};
pub use scenario::{EvacueeId, Tick, VertexId};
