//! Hazard-aware static Dijkstra, the time-dependent search over recorded
//! timelines, and re-routing of simulated casualties.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::Serialize;

use crate::analytics::{Counters, OpClass};
use crate::engine::{queue_ticks, ticks_for, Decision, RoutingPolicy, SimOutcome, Timeline, World};
use crate::hazard::{edge_intensity, HazardField};
use crate::scenario::{static_distance_to_exit, BuildingGraph, Edge, Scenario, SimParams, VertexId};
use crate::seeds::SimRng;
use crate::{EvacueeId, Tick};

/// Edge cost combining length and fire exposure: `L` on a safe edge,
/// `L + K * intensity * L` on a burning one.
pub fn effective_length(edge: &Edge, field: &HazardField, penalty: f64) -> f64 {
    effective_length_at(edge.length, field.edge_intensity(edge), penalty)
}

pub fn effective_length_at(length: f64, intensity: f64, penalty: f64) -> f64 {
    if intensity > 0.0 {
        length + penalty * intensity * length
    } else {
        length
    }
}

/// Effective distance from every vertex to its nearest exit under the
/// current hazard.
#[derive(Debug, Clone)]
pub struct ExitField {
    dist: Vec<f64>,
    penalty: f64,
}

impl ExitField {
    pub fn new(graph: &BuildingGraph, field: &HazardField, penalty: f64) -> Self {
        let dist = graph.exit_distances(|_, e| effective_length(e, field, penalty));
        ExitField { dist, penalty }
    }

    pub fn distance(&self, v: VertexId) -> f64 {
        self.dist[v.index()]
    }

    /// Neighbor minimizing `edge cost + remaining distance`; smaller id wins
    /// ties. `None` at an exit or when no exit is reachable.
    pub fn next_hop(&self, graph: &BuildingGraph, field: &HazardField, at: VertexId) -> Option<VertexId> {
        if graph.is_exit(at) || !self.dist[at.index()].is_finite() {
            return None;
        }
        let mut best: Option<(f64, VertexId)> = None;
        for l in graph.neighbors(at) {
            let c = effective_length(graph.edge(l.edge), field, self.penalty) + self.dist[l.to.index()];
            if best.is_none_or(|(b, _)| c < b) {
                best = Some((c, l.to));
            }
        }
        best.map(|(_, v)| v)
    }
}

/// Minimal effective-length path from `from` to the nearest exit, or `None`
/// when the evacuee is trapped.
pub fn dsp_route(graph: &BuildingGraph, field: &HazardField, from: VertexId, penalty: f64) -> Option<Vec<VertexId>> {
    let ef = ExitField::new(graph, field, penalty);
    if !ef.distance(from).is_finite() {
        return None;
    }
    let mut route = vec![from];
    let mut at = from;
    while let Some(next) = ef.next_hop(graph, field, at) {
        route.push(next);
        at = next;
    }
    Some(route)
}

pub fn route_cost(graph: &BuildingGraph, field: &HazardField, route: &[VertexId], penalty: f64) -> f64 {
    route
        .windows(2)
        .map(|w| {
            let e = graph.edge_between(w[0], w[1]).expect("route is a walk");
            effective_length(graph.edge(e), field, penalty)
        })
        .sum()
}

/// Dijkstra baseline: every evacuee takes the current hazard-aware shortest
/// path, re-evaluated at every vertex. Congestion is ignored.
#[derive(Debug, Default)]
pub struct DspPolicy {
    field: Option<ExitField>,
}

impl DspPolicy {
    pub fn new() -> Self {
        DspPolicy::default()
    }
}

impl RoutingPolicy for DspPolicy {
    fn name(&self) -> &'static str {
        "dsp"
    }

    fn begin_tick(&mut self, world: &World, _rng: &mut SimRng, counters: &mut Counters) {
        let g = &world.scenario.graph;
        self.field = Some(ExitField::new(g, world.hazard, world.scenario.params.hazard_penalty));
        counters.add(OpClass::EdgeRelaxation, 2 * g.edges().len() as u64);
    }

    fn next_hop(
        &mut self,
        _evacuee: EvacueeId,
        at: VertexId,
        world: &World,
        _rng: &mut SimRng,
        counters: &mut Counters,
    ) -> Decision {
        counters.bump(OpClass::DijkstraQuery);
        let field = self.field.as_ref().expect("begin_tick runs before next_hop");
        match field.next_hop(&world.scenario.graph, world.hazard, at) {
            Some(v) => Decision::Hop(v),
            None => Decision::Hold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimedStep {
    pub vertex: VertexId,
    /// Planned arrival tick.
    pub arrive: Tick,
    /// Planned departure tick; `None` at the exit.
    pub depart: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimedPath {
    pub steps: Vec<TimedStep>,
    /// Seconds from the start tick to the exit arrival.
    pub total_time: f64,
}

impl TimedPath {
    pub fn exit_arrival(&self) -> Tick {
        self.steps.last().expect("timed path is nonempty").arrive
    }

    pub fn vertices(&self) -> Vec<VertexId> {
        self.steps.iter().map(|s| s.vertex).collect()
    }
}

/// Working copy of a recorded timeline that reassignment can add committed
/// occupancy to. Reads past the end repeat the recorded final row.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTimeline {
    queue: Vec<Vec<u32>>,
    hazard: Vec<Vec<f64>>,
    final_queue: Vec<u32>,
}

impl OccupancyTimeline {
    pub fn new(queue: Vec<Vec<u32>>, hazard: Vec<Vec<f64>>) -> Self {
        assert!(!queue.is_empty() && !hazard.is_empty(), "timeline has at least one tick");
        let final_queue = queue.last().unwrap().clone();
        OccupancyTimeline { queue, hazard, final_queue }
    }

    pub fn from_timeline(tl: &Timeline) -> Self {
        OccupancyTimeline::new(tl.queue_counts.clone(), tl.hazard.clone())
    }

    /// Empty building with no fire, one recorded tick.
    pub fn empty(n: usize) -> Self {
        OccupancyTimeline::new(vec![vec![0; n]], vec![vec![0.0; n]])
    }

    /// Last tick after which every read is constant.
    pub fn stationary_after(&self) -> Tick {
        (self.queue.len().max(self.hazard.len()) - 1) as Tick
    }

    pub fn queue(&self, v: VertexId, t: Tick) -> u32 {
        match self.queue.get(t as usize) {
            Some(row) => row[v.index()],
            None => self.final_queue[v.index()],
        }
    }

    pub fn hazard(&self, v: VertexId, t: Tick) -> f64 {
        let row = (t as usize).min(self.hazard.len() - 1);
        self.hazard[row][v.index()]
    }

    /// Adds one evacuee queued at `v` at the end of ticks `from..to`.
    pub fn add_presence(&mut self, v: VertexId, from: Tick, to: Tick) {
        while self.queue.len() < to as usize {
            self.queue.push(self.final_queue.clone());
        }
        for t in from..to {
            self.queue[t as usize][v.index()] += 1;
        }
    }

    /// Removes one evacuee's presence, clamping at zero.
    pub fn remove_presence(&mut self, v: VertexId, from: Tick, to: Tick) {
        let end = (to as usize).min(self.queue.len());
        for t in from as usize..end {
            let c = &mut self.queue[t][v.index()];
            *c = c.saturating_sub(1);
        }
    }

    pub fn commit(&mut self, path: &TimedPath) {
        for s in &path.steps {
            if let Some(d) = s.depart {
                self.add_presence(s.vertex, s.arrive, d);
            }
        }
    }
}

/// Deliberate metric defects, used only to check that the oracle suite
/// notices a broken search.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricFault {
    DropDecisionCost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdParams {
    pub walking_speed: f64,
    pub tick_seconds: f64,
    pub lethal_threshold: f64,
    pub hazard_penalty: f64,
    #[doc(hidden)]
    pub fault: Option<MetricFault>,
}

impl TdParams {
    pub fn from_sim(p: &SimParams) -> Self {
        TdParams {
            walking_speed: p.walking_speed,
            tick_seconds: p.tick_seconds,
            lethal_threshold: p.fire.lethal_threshold,
            hazard_penalty: p.hazard_penalty,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pred {
    prev: (VertexId, u32),
    depart: Tick,
}

#[derive(Debug, Clone, Copy)]
struct Label {
    arrive: Tick,
    pred: Option<Pred>,
    settled: bool,
}

struct TdSearch<'a> {
    graph: &'a BuildingGraph,
    tl: &'a OccupancyTimeline,
    p: &'a TdParams,
    horizon: Tick,
}

impl TdSearch<'_> {
    fn departure(&self, v: VertexId, arrive: Tick) -> Tick {
        let d = self.graph.vertex(v).departure_rate;
        let q = self.tl.queue(v, arrive);
        let wait = queue_ticks(q, d, self.p.tick_seconds);
        match self.p.fault {
            Some(MetricFault::DropDecisionCost) => arrive + wait - 1,
            None => arrive + wait,
        }
    }

    /// Highest reading of `f` over ticks `from..=to`; constant past the horizon.
    fn window_max(&self, from: Tick, to: Tick, f: impl Fn(Tick) -> f64) -> f64 {
        let last = to.min(self.horizon + 1);
        let mut m = f64::NEG_INFINITY;
        let mut t = from;
        while t <= last {
            m = m.max(f(t));
            t += 1;
        }
        if from > last {
            m = f(from);
        }
        m
    }

    fn vertex_safe(&self, v: VertexId, arrive: Tick, depart: Tick) -> bool {
        self.window_max(arrive + 1, depart, |t| self.tl.hazard(v, t)) < self.p.lethal_threshold
    }

    /// Arrival tick at the far end of edge `e` when leaving `u` at `depart`,
    /// or `None` if the crossing is lethal.
    fn cross(&self, e: &Edge, u: VertexId, w: VertexId, depart: Tick) -> Option<Tick> {
        let inten = edge_intensity(self.tl.hazard(u, depart), self.tl.hazard(w, depart));
        let eff = effective_length_at(e.length, inten, self.p.hazard_penalty);
        let arrive = depart + ticks_for(eff / self.p.walking_speed, self.p.tick_seconds);
        let worst = self.window_max(depart + 1, arrive, |t| {
            edge_intensity(self.tl.hazard(u, t), self.tl.hazard(w, t))
        });
        (worst < self.p.lethal_threshold).then_some(arrive)
    }
}

/// Earliest-exit-arrival search from `from` starting at tick `t0`.
///
/// Each hop follows the engine's rules: the evacuee leaves `u` at
/// `a + 1 + floor(N(u, a) / d)` where `N` is the recorded queue at its arrival
/// tick `a`, then walks for `ceil(E / V_s)` ticks where `E` is the effective
/// length at the departure tick. A vertex is unusable if its recorded
/// intensity reaches the lethal threshold while the evacuee would be queued
/// there, an edge if its intensity does during the crossing.
///
/// Queue readings are arbitrary in time, so arriving later at a vertex can
/// pay off. The search therefore labels (vertex, arrival tick) states up to
/// the stationary point of the timeline and (vertex) states after it, which
/// keeps it exact. Returns `None` when no safe path exists.
pub fn td_dijkstra(
    graph: &BuildingGraph,
    timeline: &OccupancyTimeline,
    from: VertexId,
    t0: Tick,
    params: &TdParams,
    counters: &mut Counters,
) -> Option<TimedPath> {
    let horizon = timeline.stationary_after();
    let search = TdSearch { graph, tl: timeline, p: params, horizon };
    let key = |t: Tick| t.min(horizon + 1);
    let mut labels: BTreeMap<(VertexId, u32), Label> = BTreeMap::new();
    let mut heap = BinaryHeap::new();

    labels.insert((from, key(t0)), Label { arrive: t0, pred: None, settled: false });
    heap.push(Reverse((t0, from, key(t0))));

    while let Some(Reverse((t, v, k))) = heap.pop() {
        let label = labels.get_mut(&(v, k)).expect("pushed states are labelled");
        if label.settled || label.arrive != t {
            continue;
        }
        label.settled = true;
        counters.bump(OpClass::TdLabel);

        if graph.is_exit(v) {
            return Some(reconstruct(&labels, (v, k), t0, params.tick_seconds));
        }
        let depart = search.departure(v, t);
        if !search.vertex_safe(v, t, depart) {
            continue;
        }
        for l in graph.neighbors(v) {
            counters.bump(OpClass::EdgeRelaxation);
            let Some(arrive) = search.cross(graph.edge(l.edge), v, l.to, depart) else {
                continue;
            };
            let nk = (l.to, key(arrive));
            let better = labels.get(&nk).is_none_or(|lb| !lb.settled && arrive < lb.arrive);
            if better {
                labels.insert(
                    nk,
                    Label { arrive, pred: Some(Pred { prev: (v, k), depart }), settled: false },
                );
                heap.push(Reverse((arrive, l.to, nk.1)));
            }
        }
    }
    None
}

fn reconstruct(
    labels: &BTreeMap<(VertexId, u32), Label>,
    end: (VertexId, u32),
    t0: Tick,
    tick_seconds: f64,
) -> TimedPath {
    let mut steps = Vec::new();
    let mut cur = end;
    let mut depart = None;
    loop {
        let lb = labels[&cur];
        steps.push(TimedStep { vertex: cur.0, arrive: lb.arrive, depart });
        match lb.pred {
            Some(p) => {
                depart = Some(p.depart);
                cur = p.prev;
            }
            None => break,
        }
    }
    steps.reverse();
    let total_time = (steps.last().unwrap().arrive - t0) as f64 * tick_seconds;
    TimedPath { steps, total_time }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "result", rename_all = "lowercase")]
pub enum Reassignment {
    Route(TimedPath),
    Unsavable,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReassignOptions {
    /// Do not add committed routes to the working timeline.
    pub static_timeline: bool,
    /// Start tick for every reassigned evacuee.
    pub start_tick: Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reassigned {
    pub routes: BTreeMap<EvacueeId, Reassignment>,
    pub counters: Counters,
}

/// Re-routes every evacuee that perished in `outcome`.
///
/// Casualties are processed in ascending static distance from their initial
/// vertex to the nearest exit (ties by id). Their own recorded presence is
/// removed from the working timeline first, since their original routes are
/// abandoned; each committed route is then added before the next evacuee is
/// searched, unless `static_timeline` is set.
pub fn reassign_perished(outcome: &SimOutcome, scenario: &Scenario, opts: ReassignOptions) -> Reassigned {
    let graph = &scenario.graph;
    let params = TdParams::from_sim(&scenario.params);
    let mut counters = Counters::default();
    let mut working = OccupancyTimeline::from_timeline(&outcome.timeline);

    let mut perished: Vec<_> = outcome
        .records
        .iter()
        .filter(|r| r.fate == crate::engine::Fate::Perished)
        .collect();
    for r in &perished {
        let last = r.realized_path.len().saturating_sub(1);
        for (i, s) in r.realized_path.iter().enumerate() {
            match s.depart {
                Some(d) => working.remove_presence(s.vertex, s.arrive, d),
                None if i == last && !r.died_on_edge => {
                    working.remove_presence(s.vertex, s.arrive, r.terminal_tick)
                }
                None => {}
            }
        }
    }

    let mut keyed: Vec<(f64, EvacueeId, VertexId)> = perished
        .drain(..)
        .map(|r| {
            let d = static_distance_to_exit(graph, r.initial).unwrap_or(f64::INFINITY);
            (d, r.id, r.initial)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut routes = BTreeMap::new();
    for (_, id, start) in keyed {
        let found = td_dijkstra(graph, &working, start, opts.start_tick, &params, &mut counters);
        let entry = match found {
            Some(path) => {
                if !opts.static_timeline {
                    working.commit(&path);
                }
                Reassignment::Route(path)
            }
            None => Reassignment::Unsavable,
        };
        routes.insert(id, entry);
    }
    Reassigned { routes, counters }
}
