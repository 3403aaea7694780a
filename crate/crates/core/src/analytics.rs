//! Survivor rate, information-exchange counts and the instruction-count
//! elapsed-time model.
//!
//! Compute cost is not profiled. Instead every algorithm increments abstract
//! operation counters ([`OpClass`]); a [`CycleModel`] weights each class with
//! an instruction count, converts instructions to cycles through the IPC and
//! cycles to seconds through the clock frequency, dividing work evenly across
//! the servers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Fate, SimOutcome};
use crate::pipeline::Algorithm;
use crate::scenario::BuildingGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpClass {
    /// Placement, departure, arrival, escape or death of one evacuee.
    EngineEvent,
    /// One vertex growth update or one spread draw.
    HazardUpdate,
    /// One vertex queue/hazard sample written to the timeline.
    TimelineRecord,
    /// One edge relaxation in any Dijkstra variant.
    EdgeRelaxation,
    /// One next-hop request answered by the Dijkstra baseline.
    DijkstraQuery,
    /// One smart-packet hop.
    SpHop,
    /// One sweep of the RNN fixed-point iteration (all neurons of a node).
    RnnSweep,
    /// One acknowledgement applied at one node.
    AckUpdate,
    /// One next-hop request answered from a CPN mailbox.
    MailboxQuery,
    /// One lookup in a committed source route.
    SourceRouteLookup,
    /// One state settled by the time-dependent search.
    TdLabel,
}

impl OpClass {
    pub const ALL: [OpClass; 11] = [
        OpClass::EngineEvent,
        OpClass::HazardUpdate,
        OpClass::TimelineRecord,
        OpClass::EdgeRelaxation,
        OpClass::DijkstraQuery,
        OpClass::SpHop,
        OpClass::RnnSweep,
        OpClass::AckUpdate,
        OpClass::MailboxQuery,
        OpClass::SourceRouteLookup,
        OpClass::TdLabel,
    ];
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Counters(BTreeMap<OpClass, u64>);

impl Counters {
    pub fn add(&mut self, class: OpClass, n: u64) {
        if n > 0 {
            *self.0.entry(class).or_insert(0) += n;
        }
    }

    pub fn bump(&mut self, class: OpClass) {
        self.add(class, 1);
    }

    pub fn get(&self, class: OpClass) -> u64 {
        self.0.get(&class).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &Counters) {
        for (&k, &v) in &other.0 {
            self.add(k, v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (OpClass, u64)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }
}

impl FromIterator<(OpClass, u64)> for Counters {
    fn from_iter<I: IntoIterator<Item = (OpClass, u64)>>(iter: I) -> Self {
        let mut c = Counters::default();
        for (k, v) in iter {
            c.add(k, v);
        }
        c
    }
}

/// Instruction-to-time model of the planning cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleModel {
    pub ipc: f64,
    pub frequency_hz: f64,
    pub servers: u32,
    /// Instructions per invocation of each operation class.
    pub weights: BTreeMap<OpClass, f64>,
}

impl Default for CycleModel {
    fn default() -> Self {
        CycleModel {
            ipc: 1.0,
            frequency_hz: 3.4e9,
            servers: 243,
            weights: default_weights(),
        }
    }
}

/// Per-class instruction counts.
///
/// The relative sizes follow the work each operation does: an RNN sweep
/// touches every neuron of a node and does a division per neuron, a
/// smart-packet hop samples the node state and runs the routing decision, an
/// ACK update re-ranks a mailbox and updates every weight of a node. The
/// absolute scale also covers the per-operation overhead of an agent-based
/// simulator runtime. It was calibrated once on the reference building (120
/// evacuees, five pinned seeds) so that the CPNST planning run lands near
/// 2e12 cycles, the same order as the published figure for a comparable
/// building.
pub fn default_weights() -> BTreeMap<OpClass, f64> {
    BTreeMap::from([
        (OpClass::EngineEvent, 1.0e6),
        (OpClass::HazardUpdate, 1.0e5),
        (OpClass::TimelineRecord, 2.5e4),
        (OpClass::EdgeRelaxation, 2.0e5),
        (OpClass::DijkstraQuery, 5.0e5),
        (OpClass::SpHop, 2.0e7),
        (OpClass::RnnSweep, 1.0e7),
        (OpClass::AckUpdate, 3.0e7),
        (OpClass::MailboxQuery, 1.0e6),
        (OpClass::SourceRouteLookup, 5.0e4),
        (OpClass::TdLabel, 3.0e6),
    ])
}

impl CycleModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.ipc > 0.0 && self.frequency_hz > 0.0 && self.servers >= 1) {
            return Err(Error::Config(format!(
                "cycle model needs ipc > 0, frequency > 0 and servers >= 1 (got {}, {}, {})",
                self.ipc, self.frequency_hz, self.servers
            )));
        }
        Ok(())
    }

    pub fn instructions(&self, counters: &Counters) -> f64 {
        counters
            .iter()
            .map(|(k, n)| n as f64 * self.weights.get(&k).copied().unwrap_or(0.0))
            .fold(0.0, |a, b| a + b)
    }

    pub fn cycles(&self, counters: &Counters) -> f64 {
        self.instructions(counters) / self.ipc
    }
}

/// Wall-clock seconds for the counted work on the modeled cloud.
pub fn estimate_elapsed(counters: &Counters, model: &CycleModel) -> f64 {
    model.cycles(counters) / (model.frequency_hz * model.servers as f64)
}

/// Published reference point for the planning pipeline, kept for comparison
/// only; nothing here is expected to reproduce it exactly.
pub mod reference {
    /// Evacuation horizon of the published run, seconds.
    pub const EVACUATION_S: f64 = 136.0;
    pub const PLANNING_CYCLES: f64 = 1.92e12;
    pub const PLANNING_ELAPSED_S: f64 = 2.63;
    pub const REASSIGN_CYCLES: f64 = 3.74e10;
    pub const REASSIGN_ELAPSED_S: f64 = 0.39;
    pub const TOTAL_ELAPSED_S: f64 = 3.02;
}

/// Percentage of evacuees that escaped; 100 for an empty building.
pub fn survivor_rate(outcome: &SimOutcome) -> f64 {
    let total = outcome.records.len();
    if total == 0 {
        return 100.0;
    }
    let escaped = outcome.records.iter().filter(|r| r.fate == Fate::Escaped).count();
    100.0 * escaped as f64 / total as f64
}

/// Two-way exchanges between phones and the cloud.
///
/// The simulate-then-repair pipeline uploads once per evacuee at the start.
/// The live algorithms exchange at every landmark an evacuee reaches,
/// including its starting vertex.
pub fn count_exchanges(outcome: &SimOutcome, graph: &BuildingGraph, algorithm: Algorithm) -> u64 {
    match algorithm {
        Algorithm::CpnstTd => outcome.records.len() as u64,
        Algorithm::Dsp | Algorithm::Cpnst => outcome
            .records
            .iter()
            .flat_map(|r| &r.realized_path)
            .filter(|s| graph.vertex(s.vertex).landmark)
            .count() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(weights: BTreeMap<OpClass, f64>, servers: u32) -> CycleModel {
        CycleModel { ipc: 1.0, frequency_hz: 3.4e9, servers, weights }
    }

    #[test]
    fn elapsed_arithmetic() {
        let m = model(BTreeMap::from([(OpClass::EngineEvent, 1.0)]), 1);
        let c: Counters = [(OpClass::EngineEvent, 6_800_000_000)].into_iter().collect();
        assert!((estimate_elapsed(&c, &m) - 2.0).abs() < 1e-12);
        assert_eq!(estimate_elapsed(&Counters::default(), &m), 0.0);
    }

    #[test]
    fn elapsed_divides_across_servers_and_ipc() {
        let mut m = model(BTreeMap::from([(OpClass::SpHop, 10.0)]), 243);
        let c: Counters = [(OpClass::SpHop, 1_000)].into_iter().collect();
        let one = estimate_elapsed(&c, &m);
        m.ipc = 2.0;
        assert!((estimate_elapsed(&c, &m) - one / 2.0).abs() < 1e-18);
    }

    #[test]
    fn published_cycles_by_even_division() {
        // 1.92e12 cycles over 243 servers at 3.4 GHz: about 2.32 s, which
        // differs from the published 2.63 s. Kept as a documented gap.
        let s = reference::PLANNING_CYCLES / (3.4e9 * 243.0);
        assert!((s - 2.3239).abs() < 1e-3);
    }

    #[test]
    fn counters_merge_and_skip_zero() {
        let mut a: Counters = [(OpClass::SpHop, 2)].into_iter().collect();
        a.add(OpClass::TdLabel, 0);
        assert_eq!(a.iter().count(), 1);
        let b: Counters = [(OpClass::SpHop, 3), (OpClass::AckUpdate, 1)].into_iter().collect();
        a.merge(&b);
        assert_eq!(a.get(OpClass::SpHop), 5);
        assert_eq!(a.get(OpClass::AckUpdate), 1);
    }

    #[test]
    fn cycle_model_round_trips_through_json() {
        let m = CycleModel::default();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"sp_hop\""));
        let back: CycleModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn invalid_model_rejected() {
        let mut m = CycleModel::default();
        m.servers = 0;
        assert!(m.validate().is_err());
    }
}
