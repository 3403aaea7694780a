//! Cognitive Packet Network routing with a time metric.
//!
//! Every vertex runs a small random neural network with one neuron per
//! neighbor. Smart packets (SPs) launched from occupied vertices walk towards
//! an exit, steered by the RNN excitation levels (or uniformly at random with
//! probability `drift`), and sample the queue and effective edge length at each
//! hop. An SP that reaches an exit turns into an acknowledgement that travels
//! back along its path: each vertex on the way files the route suffix in its
//! mailbox, ranked by estimated travel time, and reinforces its RNN.
//! Evacuees follow the top mailbox route, re-reading it at every vertex.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{Counters, OpClass};
use crate::engine::{Decision, RoutingPolicy, World};
use crate::hazard::HazardField;
use crate::routing::{effective_length, ExitField};
use crate::scenario::{BuildingGraph, VertexId};
use crate::seeds::SimRng;
use crate::{EvacueeId, Error, Result, Tick};

/// Starting excitatory and inhibitory weight for every neuron.
const INITIAL_WEIGHT: f64 = 0.01;
const RNN_TOLERANCE: f64 = 1e-9;
const RNN_MAX_SWEEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpnParams {
    /// Probability that an SP ignores the RNN and picks a random neighbor.
    pub drift: f64,
    pub sp_per_node_per_tick: u32,
    pub mailbox_capacity: usize,
    pub rnn_learning_rate: f64,
    /// Weight of the old value in the reward-threshold moving average.
    pub threshold_smoothing: f64,
    /// Mailbox entries older than this many ticks are discarded.
    pub mailbox_ttl: Tick,
    /// Ticks of background SP traffic before the alarm.
    pub warmup_ticks: Tick,
    pub reinforcement: Reinforcement,
}

/// Size of one reinforcement step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reinforcement {
    /// Learning rate times the reward.
    Reward,
    /// Learning rate times the node's total weight times the relative
    /// deviation of the reward from the threshold (capped at 1).
    #[default]
    Surprise,
}

impl Default for CpnParams {
    fn default() -> Self {
        CpnParams {
            drift: 0.05,
            sp_per_node_per_tick: 1,
            mailbox_capacity: 5,
            rnn_learning_rate: 0.1,
            threshold_smoothing: 0.8,
            mailbox_ttl: 10,
            warmup_ticks: 50,
            reinforcement: Reinforcement::Surprise,
        }
    }
}

impl CpnParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drift) {
            return Err(Error::Config(format!("drift {} outside [0, 1]", self.drift)));
        }
        if !(self.threshold_smoothing > 0.0 && self.threshold_smoothing < 1.0) {
            return Err(Error::Config(format!(
                "threshold smoothing {} outside (0, 1)",
                self.threshold_smoothing
            )));
        }
        if !(self.rnn_learning_rate > 0.0 && self.rnn_learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.rnn_learning_rate
            )));
        }
        if self.mailbox_capacity == 0 {
            return Err(Error::Config("mailbox capacity must be at least 1".into()));
        }
        Ok(())
    }
}

/// Excitatory and inhibitory weight of one neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronWeights {
    pub excite: f64,
    pub inhibit: f64,
}

impl Default for NeuronWeights {
    fn default() -> Self {
        NeuronWeights { excite: INITIAL_WEIGHT, inhibit: INITIAL_WEIGHT }
    }
}

/// Steady-state excitation probability of each neuron.
///
/// Neuron `j` fires at rate 1 and sends its spikes to the other neurons in
/// proportion to their weights: `W+(j, i) = w+_i / (n Z_j)` and
/// `W-(j, i) = w-_i / (n Z_j)` with `Z_j` the total weight of the neurons other
/// than `j`. The remaining `1 - (n - 1) / n` of each firing leaves the network.
/// External excitation and inhibition both arrive at rate `0.1 / (n + 1)`.
/// The balance equations `q_i = lambda+_i / (1 + lambda-_i)` are iterated from
/// `q = 0`; the leak keeps every `q_i` strictly below 1.
pub fn rnn_steady_state(weights: &[NeuronWeights]) -> Result<Vec<f64>> {
    solve_rnn(weights).map(|(q, _)| q)
}

fn solve_rnn(weights: &[NeuronWeights]) -> Result<(Vec<f64>, usize)> {
    let n = weights.len();
    let valid = |w: f64| w >= 0.0 && w.is_finite();
    if n == 0 || weights.iter().any(|w| !valid(w.excite) || !valid(w.inhibit)) {
        return Err(Error::Validation(format!("bad RNN weights {weights:?}")));
    }
    let total: f64 = weights.iter().map(|w| w.excite + w.inhibit).sum();
    if total == 0.0 {
        return Err(Error::Validation("RNN weights are all zero".into()));
    }
    let external = 0.1 / (n as f64 + 1.0);
    let nf = n as f64;
    // Emission scale per source neuron.
    let scale: Vec<f64> = weights
        .iter()
        .map(|w| {
            let z = total - w.excite - w.inhibit;
            if z > 0.0 {
                1.0 / (nf * z)
            } else {
                0.0
            }
        })
        .collect();

    let mut q = vec![0.0; n];
    for sweep in 1..=RNN_MAX_SWEEPS {
        let emitted: f64 = q.iter().zip(&scale).map(|(a, s)| a * s).sum();
        let mut delta: f64 = 0.0;
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let from_others = emitted - q[i] * scale[i];
                let plus = external + from_others * weights[i].excite;
                let minus = external + from_others * weights[i].inhibit;
                let v = plus / (1.0 + minus);
                delta = delta.max((v - q[i]).abs());
                v
            })
            .collect();
        q = next;
        if delta < RNN_TOLERANCE {
            return Ok((q, sweep));
        }
    }
    Err(Error::RnnDiverged {
        sweeps: RNN_MAX_SWEEPS,
        weights: weights.iter().map(|w| (w.excite, w.inhibit)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MailboxEntry {
    /// Starts at the owning vertex and ends at an exit.
    pub route: Vec<VertexId>,
    pub estimated_time: f64,
    /// Tick the estimate was measured.
    pub freshness: Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpnNodeState {
    pub node: VertexId,
    /// Ascending by estimated time.
    pub mailbox: Vec<MailboxEntry>,
    /// Sorted by id, parallel to `weights`.
    pub neighbors: Vec<VertexId>,
    pub weights: Vec<NeuronWeights>,
    pub reward_threshold: f64,
    q_cache: Option<Vec<f64>>,
}

impl CpnNodeState {
    pub fn new(node: VertexId, neighbors: Vec<VertexId>) -> Self {
        let weights = vec![NeuronWeights::default(); neighbors.len()];
        CpnNodeState { node, mailbox: Vec::new(), neighbors, weights, reward_threshold: 0.0, q_cache: None }
    }

    /// Excitation per neighbor, recomputed only after a weight change.
    pub fn excitation(&mut self, counters: &mut Counters) -> Result<&[f64]> {
        if self.q_cache.is_none() {
            let (q, sweeps) = solve_rnn(&self.weights)?;
            counters.add(OpClass::RnnSweep, sweeps as u64);
            self.q_cache = Some(q);
        }
        Ok(self.q_cache.as_deref().unwrap())
    }

    pub fn top_route(&self) -> Option<&MailboxEntry> {
        self.mailbox.first()
    }

    /// Files a route, replacing any older estimate for the same route, and
    /// evicts the slowest entries beyond `capacity`.
    pub fn insert_route(&mut self, route: Vec<VertexId>, time: f64, tick: Tick, capacity: usize) {
        self.mailbox.retain(|e| e.route != route);
        let at = self.mailbox.partition_point(|e| e.estimated_time <= time);
        self.mailbox.insert(at, MailboxEntry { route, estimated_time: time, freshness: tick });
        self.mailbox.truncate(capacity);
    }

    /// Scales the weights back to their initial total once they exceed it.
    /// A common factor leaves the excitation levels unchanged, so the cache
    /// stays valid; later updates keep their relative size.
    pub fn renormalize(&mut self) {
        let target = 2.0 * INITIAL_WEIGHT * self.weights.len() as f64;
        let total: f64 = self.weights.iter().map(|w| w.excite + w.inhibit).sum();
        if total > target {
            let f = target / total;
            for w in &mut self.weights {
                w.excite *= f;
                w.inhibit *= f;
            }
        }
    }

    pub fn purge_stale(&mut self, now: Tick, ttl: Tick) {
        self.mailbox.retain(|e| e.freshness + ttl >= now);
    }

    fn neighbor_slot(&self, v: VertexId) -> Option<usize> {
        self.neighbors.binary_search(&v).ok()
    }

    /// Reward-driven weight update for a route that left through `used`.
    pub fn reinforce(&mut self, used: VertexId, reward: f64, params: &CpnParams) {
        let Some(k) = self.neighbor_slot(used) else {
            return;
        };
        let n = self.weights.len();
        let t = self.reward_threshold;
        let step = match params.reinforcement {
            Reinforcement::Reward => params.rnn_learning_rate * reward,
            Reinforcement::Surprise => {
                let surprise = if t > 0.0 { ((reward - t).abs() / t).min(1.0) } else { 1.0 };
                let total: f64 = self.weights.iter().map(|w| w.excite + w.inhibit).sum();
                params.rnn_learning_rate * surprise * total
            }
        };
        let share = if n > 1 { step / (n - 1) as f64 } else { 0.0 };
        if reward >= self.reward_threshold {
            self.weights[k].excite += step;
            for (j, w) in self.weights.iter_mut().enumerate() {
                if j != k {
                    w.inhibit += share;
                }
            }
        } else {
            self.weights[k].inhibit += step;
            for (j, w) in self.weights.iter_mut().enumerate() {
                if j != k {
                    w.excite += share;
                }
            }
        }
        let a = params.threshold_smoothing;
        self.reward_threshold = a * self.reward_threshold + (1.0 - a) * reward;
        self.q_cache = None;
    }
}

/// Queue and effective-length readings an SP takes while walking.
pub trait Observed {
    fn queue(&self, v: VertexId) -> u32;
    fn effective_length(&self, a: VertexId, b: VertexId) -> f64;
}

/// Live simulator state as seen by SPs.
pub struct Observation<'a> {
    pub graph: &'a BuildingGraph,
    pub hazard: &'a HazardField,
    pub queue_len: &'a [u32],
    pub penalty: f64,
}

impl Observed for Observation<'_> {
    fn queue(&self, v: VertexId) -> u32 {
        self.queue_len[v.index()]
    }

    fn effective_length(&self, a: VertexId, b: VertexId) -> f64 {
        let e = self.graph.edge_between(a, b).expect("observed hop is an edge");
        effective_length(self.graph.edge(e), self.hazard, self.penalty)
    }
}

/// Travel-time estimate of a route: for every hop, walking time over the
/// effective length plus the queueing time at the vertex being left. The exit
/// at the end adds nothing, and the one-second decision cost is not included.
pub fn path_time_estimate(
    graph: &BuildingGraph,
    route: &[VertexId],
    observed: &impl Observed,
    walking_speed: f64,
) -> Result<f64> {
    match route.last() {
        None => return Ok(0.0),
        Some(&last) if !graph.is_exit(last) => {
            return Err(Error::Route(format!("route ends at {last}, which is not an exit")))
        }
        _ => {}
    }
    let mut total = 0.0;
    for w in route.windows(2) {
        if graph.edge_between(w[0], w[1]).is_none() {
            return Err(Error::Route(format!("{} and {} are not adjacent", w[0], w[1])));
        }
        let d = graph.vertex(w[0]).departure_rate;
        total += observed.effective_length(w[0], w[1]) / walking_speed + observed.queue(w[0]) as f64 / d;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HopSample {
    pub queue: u32,
    pub effective_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmartPacket {
    pub origin: VertexId,
    pub visited: Vec<VertexId>,
    /// One sample per hop taken, describing the vertex left and the edge used.
    pub samples: Vec<HopSample>,
}

impl SmartPacket {
    pub fn new(origin: VertexId) -> Self {
        SmartPacket { origin, visited: vec![origin], samples: Vec::new() }
    }

    pub fn at(&self) -> VertexId {
        *self.visited.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ack {
    /// The SP's visited sequence, exit first.
    pub reverse_route: Vec<VertexId>,
    /// Estimated time of the whole route.
    pub measured_time: f64,
    /// Estimated time of each hop, in forward order.
    pub hop_times: Vec<f64>,
}

impl Ack {
    pub fn from_packet(sp: &SmartPacket, graph: &BuildingGraph, walking_speed: f64) -> Self {
        let hop_times: Vec<f64> = sp
            .samples
            .iter()
            .zip(&sp.visited)
            .map(|(s, &v)| s.effective_length / walking_speed + s.queue as f64 / graph.vertex(v).departure_rate)
            .collect();
        let mut reverse_route = sp.visited.clone();
        reverse_route.reverse();
        Ack { reverse_route, measured_time: hop_times.iter().sum(), hop_times }
    }

    fn forward(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.reverse_route.iter().rev().copied()
    }
}

/// Routing step of an SP at its current vertex. Returns `None` when every
/// neighbor has been visited (the packet is dropped).
pub fn sp_next_hop(
    state: &mut CpnNodeState,
    sp: &SmartPacket,
    params: &CpnParams,
    rng: &mut SimRng,
    counters: &mut Counters,
) -> Result<Option<VertexId>> {
    let open: Vec<usize> = (0..state.neighbors.len())
        .filter(|&i| !sp.visited.contains(&state.neighbors[i]))
        .collect();
    if open.is_empty() {
        return Ok(None);
    }
    if params.drift > 0.0 && rng.gen::<f64>() < params.drift {
        let pick = rng.gen_range(0..open.len() as u32) as usize;
        return Ok(Some(state.neighbors[open[pick]]));
    }
    let q = state.excitation(counters)?;
    let top = open.iter().map(|&i| q[i]).fold(f64::NEG_INFINITY, f64::max);
    let best: Vec<usize> = open.into_iter().filter(|&i| q[i] == top).collect();
    // Exact ties (an untrained node) are broken at random.
    let pick = if best.len() > 1 { rng.gen_range(0..best.len() as u32) as usize } else { 0 };
    Ok(Some(state.neighbors[best[pick]]))
}

/// Applies an acknowledgement at one vertex: files the route suffix starting
/// there and reinforces the neuron of the neighbor it used. Vertices that are
/// not on the route, and the exit itself, are left unchanged.
pub fn handle_ack(state: &mut CpnNodeState, ack: &Ack, tick: Tick, params: &CpnParams) {
    let route: Vec<VertexId> = ack.forward().collect();
    let Some(pos) = route.iter().position(|&v| v == state.node) else {
        return;
    };
    if pos + 1 >= route.len() {
        return;
    }
    let time: f64 = ack.hop_times[pos..].iter().sum();
    let used = route[pos + 1];
    state.insert_route(route[pos..].to_vec(), time, tick, params.mailbox_capacity);
    if time > 0.0 {
        state.reinforce(used, 1.0 / time, params);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TickStats {
    pub tick: Tick,
    pub sps_launched: u32,
    pub acks: u32,
}

/// Per-vertex CPN state for a whole building.
#[derive(Debug, Clone)]
pub struct CpnNetwork {
    pub nodes: Vec<CpnNodeState>,
    pub params: CpnParams,
    pub walking_speed: f64,
    pub stats: Vec<TickStats>,
}

impl CpnNetwork {
    pub fn new(graph: &BuildingGraph, params: CpnParams, walking_speed: f64) -> Self {
        let nodes = graph
            .vertices()
            .iter()
            .map(|v| CpnNodeState::new(v.id, graph.neighbors(v.id).iter().map(|l| l.to).collect()))
            .collect();
        CpnNetwork { nodes, params, walking_speed, stats: Vec::new() }
    }

    pub fn node(&self, v: VertexId) -> &CpnNodeState {
        &self.nodes[v.index()]
    }

    /// Top route of every vertex with a nonempty mailbox.
    pub fn snapshot(&self) -> Vec<(VertexId, MailboxEntry)> {
        self.nodes
            .iter()
            .filter_map(|s| s.top_route().map(|e| (s.node, e.clone())))
            .collect()
    }
}

/// One tick of SP traffic: stale mailbox entries are purged, then every
/// non-exit vertex with a nonempty queue launches its SPs in id order. Each SP
/// walks until it reaches an exit, is dropped, or runs out of its hop budget
/// of twice the vertex count.
pub fn cpn_tick(
    net: &mut CpnNetwork,
    graph: &BuildingGraph,
    obs: &impl Observed,
    tick: Tick,
    rng: &mut SimRng,
    counters: &mut Counters,
) -> Result<TickStats> {
    let sources: Vec<VertexId> = graph.non_exits().filter(|&v| obs.queue(v) > 0).collect();
    let stats = launch(net, graph, obs, &sources, tick, rng, counters)?;
    net.stats.push(stats);
    Ok(stats)
}

/// Background SP traffic in the empty, unburnt building before the alarm:
/// every non-exit vertex launches its SPs for `ticks` ticks. Only the trained
/// RNN weights carry over; the mailboxes are cleared afterwards.
pub fn warm_up(net: &mut CpnNetwork, graph: &BuildingGraph, ticks: Tick, rng: &mut SimRng) -> Result<()> {
    struct Quiet<'a>(&'a BuildingGraph);
    impl Observed for Quiet<'_> {
        fn queue(&self, _v: VertexId) -> u32 {
            0
        }
        fn effective_length(&self, a: VertexId, b: VertexId) -> f64 {
            self.0.edge(self.0.edge_between(a, b).expect("observed hop is an edge")).length
        }
    }
    let sources: Vec<VertexId> = graph.non_exits().collect();
    let mut scratch = Counters::default();
    for t in 0..ticks {
        launch(net, graph, &Quiet(graph), &sources, t, rng, &mut scratch)?;
    }
    for s in &mut net.nodes {
        s.mailbox.clear();
    }
    Ok(())
}

fn launch(
    net: &mut CpnNetwork,
    graph: &BuildingGraph,
    obs: &impl Observed,
    sources: &[VertexId],
    tick: Tick,
    rng: &mut SimRng,
    counters: &mut Counters,
) -> Result<TickStats> {
    let params = net.params.clone();
    for s in &mut net.nodes {
        s.purge_stale(tick, params.mailbox_ttl);
        s.renormalize();
    }
    let budget = 2 * graph.len();
    let mut stats = TickStats { tick, ..TickStats::default() };
    for &src in sources {
        for _ in 0..params.sp_per_node_per_tick {
            stats.sps_launched += 1;
            let mut sp = SmartPacket::new(src);
            while !graph.is_exit(sp.at()) && sp.samples.len() < budget {
                let at = sp.at();
                let Some(next) = sp_next_hop(&mut net.nodes[at.index()], &sp, &params, rng, counters)? else {
                    break;
                };
                counters.bump(OpClass::SpHop);
                sp.samples.push(HopSample { queue: obs.queue(at), effective_length: obs.effective_length(at, next) });
                sp.visited.push(next);
            }
            if graph.is_exit(sp.at()) {
                let ack = Ack::from_packet(&sp, graph, net.walking_speed);
                for &v in &ack.reverse_route[1..] {
                    counters.bump(OpClass::AckUpdate);
                    handle_ack(&mut net.nodes[v.index()], &ack, tick, &params);
                }
                stats.acks += 1;
            }
        }
    }
    Ok(stats)
}

/// Next vertex for an evacuee at `state.node`: the second vertex of the top
/// mailbox route, or `fallback()` when the mailbox is empty or its first hop
/// is no longer adjacent.
pub fn cpnst_next_hop(
    state: &CpnNodeState,
    graph: &BuildingGraph,
    fallback: impl FnOnce() -> Option<VertexId>,
) -> Option<VertexId> {
    let hop = state.top_route().and_then(|e| e.route.get(1).copied());
    match hop {
        Some(v) if graph.edge_between(state.node, v).is_some() => Some(v),
        _ => fallback(),
    }
}

/// CPN routing with evacuees as payload packets that follow the mailboxes.
#[derive(Debug)]
pub struct CpnstPolicy {
    net: Option<CpnNetwork>,
    fallback: Option<(Tick, ExitField)>,
}

impl CpnstPolicy {
    pub fn new() -> Self {
        CpnstPolicy { net: None, fallback: None }
    }

    pub fn network(&self) -> Option<&CpnNetwork> {
        self.net.as_ref()
    }
}

impl Default for CpnstPolicy {
    fn default() -> Self {
        CpnstPolicy::new()
    }
}

impl RoutingPolicy for CpnstPolicy {
    fn name(&self) -> &'static str {
        "cpnst"
    }

    fn begin_tick(&mut self, world: &World, rng: &mut SimRng, counters: &mut Counters) {
        let p = &world.scenario.params;
        let graph = &world.scenario.graph;
        if self.net.is_none() {
            let mut net = CpnNetwork::new(graph, p.cpn.clone(), p.walking_speed);
            if let Err(e) = warm_up(&mut net, graph, p.cpn.warmup_ticks, rng) {
                panic!("CPN warm-up failed: {e}");
            }
            self.net = Some(net);
        }
        let net = self.net.as_mut().unwrap();
        let obs = Observation { graph, hazard: world.hazard, queue_len: world.queue_len, penalty: p.hazard_penalty };
        if let Err(e) = cpn_tick(net, graph, &obs, world.tick, rng, counters) {
            panic!("CPN update failed at tick {}: {e}", world.tick);
        }
    }

    fn next_hop(
        &mut self,
        _evacuee: EvacueeId,
        at: VertexId,
        world: &World,
        _rng: &mut SimRng,
        counters: &mut Counters,
    ) -> Decision {
        counters.bump(OpClass::MailboxQuery);
        let graph = &world.scenario.graph;
        let state = self.net.as_ref().expect("begin_tick runs first").node(at);
        let fallback = &mut self.fallback;
        let hop = cpnst_next_hop(state, graph, || {
            if fallback.as_ref().is_none_or(|(t, _)| *t != world.tick) {
                counters.add(OpClass::EdgeRelaxation, 2 * graph.edges().len() as u64);
                *fallback = Some((
                    world.tick,
                    ExitField::new(graph, world.hazard, world.scenario.params.hazard_penalty),
                ));
            }
            counters.bump(OpClass::DijkstraQuery);
            fallback.as_ref().unwrap().1.next_hop(graph, world.hazard, at)
        });
        match hop {
            Some(v) => Decision::Hop(v),
            None => Decision::Hold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Edge, EdgeKind, Vertex, VertexKind};
    use crate::seeds;

    fn vx(id: u32, kind: VertexKind) -> Vertex {
        Vertex { id: VertexId(id), floor: 0, kind, departure_rate: 1.0, landmark: false, pos: None }
    }

    fn ed(a: u32, b: u32, length: f64) -> Edge {
        Edge { a: VertexId(a), b: VertexId(b), length, kind: EdgeKind::Corridor, spread_rate: None }
    }

    fn w(excite: f64, inhibit: f64) -> NeuronWeights {
        NeuronWeights { excite, inhibit }
    }

    struct Fixed {
        queues: Vec<u32>,
        graph: BuildingGraph,
    }

    impl Observed for Fixed {
        fn queue(&self, v: VertexId) -> u32 {
            self.queues[v.index()]
        }
        fn effective_length(&self, a: VertexId, b: VertexId) -> f64 {
            self.graph.edge(self.graph.edge_between(a, b).unwrap()).length
        }
    }

    fn line() -> BuildingGraph {
        BuildingGraph::new(
            vec![vx(0, VertexKind::Room), vx(1, VertexKind::Corridor), vx(2, VertexKind::Exit)],
            vec![ed(0, 1, 10.0), ed(1, 2, 5.0)],
        )
        .unwrap()
    }

    #[test]
    fn rnn_symmetry_and_single_neuron() {
        let q = rnn_steady_state(&[w(1.0, 0.5), w(1.0, 0.5)]).unwrap();
        assert!((q[0] - q[1]).abs() < 1e-12);
        let q = rnn_steady_state(&[w(3.0, 1.0)]).unwrap();
        assert!((q[0] - 0.05 / 1.05).abs() < 1e-12);
    }

    #[test]
    fn rnn_argmax_follows_excitation() {
        let q = rnn_steady_state(&[w(2.0, 1.0), w(1.0, 1.0), w(1.0, 1.0)]).unwrap();
        assert!(q[0] > q[1] && q[0] > q[2]);
        assert!(q.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn rnn_rejects_zero_or_negative_weights() {
        assert!(rnn_steady_state(&[w(0.0, 0.0)]).is_err());
        assert!(rnn_steady_state(&[w(-1.0, 1.0)]).is_err());
        assert!(rnn_steady_state(&[]).is_err());
    }

    #[test]
    fn path_time_examples() {
        let g = line();
        let obs = Fixed { queues: vec![2, 0, 0], graph: g.clone() };
        let r = [VertexId(0), VertexId(1), VertexId(2)];
        assert_eq!(path_time_estimate(&g, &r, &obs, 1.0).unwrap(), 17.0);
        let obs0 = Fixed { queues: vec![0; 3], graph: g.clone() };
        assert_eq!(path_time_estimate(&g, &r[1..], &obs0, 1.0).unwrap(), 5.0);
        assert_eq!(path_time_estimate(&g, &[], &obs0, 1.0).unwrap(), 0.0);
        assert_eq!(path_time_estimate(&g, &[VertexId(2)], &obs0, 1.0).unwrap(), 0.0);
        assert!(path_time_estimate(&g, &r[..2], &obs0, 1.0).is_err());
    }

    #[test]
    fn sp_drift_one_is_uniform() {
        let mut s = CpnNodeState::new(VertexId(0), (1..=4).map(VertexId).collect());
        let params = CpnParams { drift: 1.0, ..CpnParams::default() };
        let mut rng = seeds::rng(77);
        let sp = SmartPacket::new(VertexId(0));
        let mut hits = [0u32; 4];
        let mut c = Counters::default();
        for _ in 0..10_000 {
            let v = sp_next_hop(&mut s, &sp, &params, &mut rng, &mut c).unwrap().unwrap();
            hits[v.0 as usize - 1] += 1;
        }
        for h in hits {
            assert!((h as f64 / 10_000.0 - 0.25).abs() <= 0.02);
        }
    }

    #[test]
    fn sp_drift_zero_takes_argmax_and_kills_when_boxed_in() {
        let mut s = CpnNodeState::new(VertexId(0), vec![VertexId(1), VertexId(2), VertexId(3)]);
        s.weights = vec![w(1.5, 1.0), w(2.0, 1.0), w(1.0, 1.0)];
        let params = CpnParams { drift: 0.0, ..CpnParams::default() };
        let mut rng = seeds::rng(1);
        let mut c = Counters::default();
        let mut sp = SmartPacket::new(VertexId(0));
        assert_eq!(sp_next_hop(&mut s, &sp, &params, &mut rng, &mut c).unwrap(), Some(VertexId(2)));
        sp.visited.push(VertexId(2));
        assert_eq!(sp_next_hop(&mut s, &sp, &params, &mut rng, &mut c).unwrap(), Some(VertexId(1)));
        sp.visited.extend([VertexId(1), VertexId(3)]);
        assert_eq!(sp_next_hop(&mut s, &sp, &params, &mut rng, &mut c).unwrap(), None);
    }

    fn ack(route: &[u32], hop_times: &[f64]) -> Ack {
        let mut reverse_route: Vec<VertexId> = route.iter().map(|&v| VertexId(v)).collect();
        reverse_route.reverse();
        Ack { reverse_route, measured_time: hop_times.iter().sum(), hop_times: hop_times.to_vec() }
    }

    #[test]
    fn ack_fills_mailbox_in_rank_order() {
        let params = CpnParams::default();
        let mut s = CpnNodeState::new(VertexId(0), vec![VertexId(1), VertexId(2)]);
        handle_ack(&mut s, &ack(&[0, 1, 9], &[25.0, 15.0]), 0, &params);
        assert_eq!(s.mailbox.len(), 1);
        assert_eq!(s.mailbox[0].estimated_time, 40.0);

        let mut s = CpnNodeState::new(VertexId(0), vec![VertexId(1), VertexId(2)]);
        handle_ack(&mut s, &ack(&[0, 1, 9], &[20.0, 10.0]), 0, &params);
        handle_ack(&mut s, &ack(&[0, 2, 9], &[10.0, 10.0]), 0, &params);
        let times: Vec<f64> = s.mailbox.iter().map(|e| e.estimated_time).collect();
        assert_eq!(times, vec![20.0, 30.0]);
        assert_eq!(s.mailbox[0].route[1], VertexId(2));
    }

    #[test]
    fn ack_uses_suffix_from_the_node() {
        let params = CpnParams::default();
        let mut s = CpnNodeState::new(VertexId(1), vec![VertexId(0), VertexId(9)]);
        handle_ack(&mut s, &ack(&[0, 1, 9], &[20.0, 10.0]), 3, &params);
        assert_eq!(s.mailbox[0].route, vec![VertexId(1), VertexId(9)]);
        assert_eq!(s.mailbox[0].estimated_time, 10.0);
        assert_eq!(s.mailbox[0].freshness, 3);
    }

    #[test]
    fn mailbox_capacity_and_ttl() {
        let mut s = CpnNodeState::new(VertexId(0), vec![VertexId(1)]);
        for i in 0..7 {
            s.insert_route(vec![VertexId(0), VertexId(100 + i)], 10.0 - i as f64, i, 5);
        }
        assert_eq!(s.mailbox.len(), 5);
        assert_eq!(s.mailbox[0].estimated_time, 4.0);
        s.purge_stale(14, 10);
        assert!(s.mailbox.iter().all(|e| e.freshness >= 4));
    }

    #[test]
    fn repeated_rewards_win_the_argmax() {
        let params = CpnParams::default();
        let mut s = CpnNodeState::new(VertexId(0), vec![VertexId(1), VertexId(2), VertexId(3)]);
        for t in 0..50 {
            handle_ack(&mut s, &ack(&[0, 3, 9], &[2.0, 3.0]), t, &params);
        }
        let q = s.excitation(&mut Counters::default()).unwrap().to_vec();
        assert!(q[2] > q[0] && q[2] > q[1]);
    }

    #[test]
    fn cpnst_next_hop_uses_mailbox_or_fallback() {
        let g = line();
        let mut s = CpnNodeState::new(VertexId(1), vec![VertexId(0), VertexId(2)]);
        assert_eq!(cpnst_next_hop(&s, &g, || Some(VertexId(0))), Some(VertexId(0)));
        s.insert_route(vec![VertexId(1), VertexId(2)], 5.0, 0, 5);
        assert_eq!(cpnst_next_hop(&s, &g, || None), Some(VertexId(2)));
        // A route whose first hop is not an edge of the graph.
        let mut stale = CpnNodeState::new(VertexId(0), vec![VertexId(1)]);
        stale.insert_route(vec![VertexId(0), VertexId(2)], 1.0, 0, 5);
        assert_eq!(cpnst_next_hop(&stale, &g, || Some(VertexId(1))), Some(VertexId(1)));
    }

    #[test]
    fn tick_without_evacuees_changes_nothing() {
        let g = line();
        let mut net = CpnNetwork::new(&g, CpnParams::default(), 1.0);
        let before = net.nodes.clone();
        let obs = Fixed { queues: vec![0; 3], graph: g.clone() };
        let st = cpn_tick(&mut net, &g, &obs, 0, &mut seeds::rng(0), &mut Counters::default()).unwrap();
        assert_eq!(st.sps_launched, 0);
        assert_eq!(net.nodes, before);
    }

    #[test]
    fn single_sp_on_line_files_direct_route() {
        let g = BuildingGraph::new(vec![vx(0, VertexKind::Room), vx(1, VertexKind::Exit)], vec![ed(0, 1, 7.0)])
            .unwrap();
        let mut net = CpnNetwork::new(&g, CpnParams::default(), 1.0);
        let obs = Fixed { queues: vec![1, 0], graph: g.clone() };
        let st = cpn_tick(&mut net, &g, &obs, 0, &mut seeds::rng(0), &mut Counters::default()).unwrap();
        assert_eq!(st.acks, 1);
        let top = net.node(VertexId(0)).top_route().unwrap();
        assert_eq!(top.route, vec![VertexId(0), VertexId(1)]);
        assert_eq!(top.estimated_time, 8.0);
    }

    /// `side` x `side` grid of 5 m corridors with the exit in one corner.
    fn grid(side: u32) -> BuildingGraph {
        let id = |r: u32, c: u32| r * side + c;
        let vertices = (0..side * side)
            .map(|i| vx(i, if i == 0 { VertexKind::Exit } else { VertexKind::Corridor }))
            .collect();
        let mut edges = Vec::new();
        for r in 0..side {
            for c in 0..side {
                if c + 1 < side {
                    edges.push(ed(id(r, c), id(r, c + 1), 5.0));
                }
                if r + 1 < side {
                    edges.push(ed(id(r, c), id(r + 1, c), 5.0));
                }
            }
        }
        BuildingGraph::new(vertices, edges).unwrap()
    }

    #[test]
    fn grid_routes_converge_near_shortest() {
        // One evacuee everywhere: each hop costs one second of queueing and
        // five of walking, so the best route from (r, c) takes 6 (r + c).
        let side = 5;
        let g = grid(side);
        let params = CpnParams { drift: 0.2, mailbox_ttl: 1000, ..CpnParams::default() };
        let mut net = CpnNetwork::new(&g, params, 1.0);
        let mut queues = vec![1; g.len()];
        queues[0] = 0;
        let obs = Fixed { queues, graph: g.clone() };
        let mut rng = seeds::rng(5);
        let mut c = Counters::default();
        for t in 0..200 {
            cpn_tick(&mut net, &g, &obs, t, &mut rng, &mut c).unwrap();
        }
        for v in g.non_exits() {
            let (r, col) = (v.0 / side, v.0 % side);
            let best = 6.0 * (r + col) as f64;
            let found = net.node(v).top_route().expect("every source has a route").estimated_time;
            assert!(found <= 1.1 * best, "vertex {v}: {found} vs {best}");
        }
    }

    #[test]
    fn surprise_step_scales_with_deviation() {
        let params = CpnParams { reinforcement: Reinforcement::Surprise, ..CpnParams::default() };
        let mut s = CpnNodeState::new(VertexId(0), vec![VertexId(1), VertexId(2)]);
        s.reward_threshold = 0.5;
        let before = s.weights.clone();
        s.reinforce(VertexId(1), 0.5, &params);
        assert_eq!(s.weights, before);

        // Deviation of the full threshold or more moves a tenth of the total.
        let mut s = CpnNodeState::new(VertexId(0), vec![VertexId(1), VertexId(2)]);
        s.reward_threshold = 0.5;
        s.reinforce(VertexId(1), 5.0, &params);
        assert!((s.weights[0].excite - (0.01 + 0.1 * 0.04)).abs() < 1e-15);
        assert!((s.weights[1].inhibit - (0.01 + 0.1 * 0.04)).abs() < 1e-15);
        assert!((s.reward_threshold - (0.8 * 0.5 + 0.2 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn renormalize_keeps_excitation() {
        let mut s = CpnNodeState::new(VertexId(0), vec![VertexId(1), VertexId(2), VertexId(3)]);
        s.weights = vec![w(3.0, 1.0), w(1.0, 2.0), w(0.5, 0.5)];
        let q = s.excitation(&mut Counters::default()).unwrap().to_vec();
        s.renormalize();
        let total: f64 = s.weights.iter().map(|x| x.excite + x.inhibit).sum();
        assert!((total - 0.06).abs() < 1e-12);
        let fresh = rnn_steady_state(&s.weights).unwrap();
        for (a, b) in q.iter().zip(&fresh) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn warm_up_trains_weights_and_clears_mailboxes() {
        let g = grid(3);
        let mut net = CpnNetwork::new(&g, CpnParams::default(), 1.0);
        warm_up(&mut net, &g, 50, &mut seeds::rng(3)).unwrap();
        assert!(net.nodes.iter().all(|s| s.mailbox.is_empty()));
        let trained = g.non_exits().filter(|&v| net.node(v).weights.iter().any(|x| *x != NeuronWeights::default()));
        assert_eq!(trained.count(), g.len() - 1);
    }
}
