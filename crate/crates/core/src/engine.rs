//! Tick-driven evacuation engine.
//!
//! One tick is one second. Within a tick events resolve in a fixed order:
//!
//! 1. hazard step
//! 2. deaths (queued at a lethal vertex, or on an edge whose intensity is lethal)
//! 3. departures (queue heads whose departure tick has come)
//! 4. arrivals (escape at an exit, otherwise join the vertex FIFO queue)
//! 5. decisions (policy bookkeeping, then a next hop for every evacuee due to
//!    leave on the following tick)
//!
//! An evacuee joining a queue at tick `t` with `k` evacuees ahead leaves at
//! `t + 1 + floor(k / d)`: one second to pick a direction plus the queueing
//! time `k / d`. Tick 0 ignites the hazard origin and places every evacuee as
//! an arrival at its initial vertex.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::analytics::{Counters, OpClass};
use crate::hazard::HazardField;
use crate::scenario::{Scenario, VertexId};
use crate::seeds::{self, SimRng};
use crate::{Error, EvacueeId, Result, Tick};

/// Queueing time at a node: `n_queued / departure_rate` seconds.
pub fn queue_delay(n_queued: u32, departure_rate: f64) -> Result<f64> {
    if !(departure_rate > 0.0) {
        return Err(Error::Config(format!(
            "departure rate must be positive, got {departure_rate}"
        )));
    }
    Ok(n_queued as f64 / departure_rate)
}

/// Walking time along an edge: `effective_length / v_s` seconds.
pub fn edge_time(effective_length: f64, walking_speed: f64) -> Result<f64> {
    if !(walking_speed > 0.0) {
        return Err(Error::Config(format!(
            "walking speed must be positive, got {walking_speed}"
        )));
    }
    Ok(effective_length / walking_speed)
}

/// Whole ticks needed to cover `seconds`, at least one.
pub fn ticks_for(seconds: f64, tick_seconds: f64) -> Tick {
    // Tolerate float noise such as 21 / 1.4 = 15.000000000000002.
    let t = (seconds / tick_seconds - 1e-9).ceil();
    if t.is_finite() {
        (t.max(1.0)).min(u32::MAX as f64 / 4.0) as Tick
    } else {
        u32::MAX / 4
    }
}

/// Ticks spent in the queue before leaving: decision cost plus `floor(k / d)`.
pub fn queue_ticks(ahead: u32, departure_rate: f64, tick_seconds: f64) -> Tick {
    1 + (ahead as f64 / (departure_rate * tick_seconds) + 1e-9).floor() as Tick
}

/// Per-vertex queue counts and hazard intensities recorded at the end of
/// every tick `0..=horizon`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Timeline {
    pub queue_counts: Vec<Vec<u32>>,
    pub hazard: Vec<Vec<f64>>,
}

impl Timeline {
    pub fn horizon(&self) -> Tick {
        self.queue_counts.len().saturating_sub(1) as Tick
    }

    /// Queue count at `v`; ticks past the horizon repeat the last row.
    pub fn queue(&self, v: VertexId, t: Tick) -> u32 {
        let row = (t as usize).min(self.queue_counts.len() - 1);
        self.queue_counts[row][v.index()]
    }

    pub fn hazard(&self, v: VertexId, t: Tick) -> f64 {
        let row = (t as usize).min(self.hazard.len() - 1);
        self.hazard[row][v.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fate {
    Escaped,
    Perished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathStep {
    pub vertex: VertexId,
    pub arrive: Tick,
    /// `None` for the last vertex (exit reached, or death there).
    pub depart: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvacueeRecord {
    pub id: EvacueeId,
    pub initial: VertexId,
    pub fate: Fate,
    /// Escape or death tick.
    pub terminal_tick: Tick,
    pub realized_path: Vec<PathStep>,
    pub exchange_count: u32,
    /// True when the evacuee died while walking an edge.
    pub died_on_edge: bool,
}

impl EvacueeRecord {
    pub fn vertices(&self) -> Vec<VertexId> {
        self.realized_path.iter().map(|s| s.vertex).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Placed,
    Depart,
    Arrive,
    Escape,
    Perish,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EventRecord {
    pub tick: Tick,
    pub evacuee: EvacueeId,
    pub kind: EventKind,
    /// Vertex of the event; for departures the vertex left, for deaths on an
    /// edge the vertex the evacuee was heading to.
    pub vertex: VertexId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOutcome {
    /// One record per evacuee, sorted by id.
    pub records: Vec<EvacueeRecord>,
    pub timeline: Timeline,
    pub total_duration: Tick,
    pub counters: Counters,
    /// The tick cap was hit; evacuees still inside were marked perished.
    pub truncated: bool,
    /// Empty unless event recording was requested.
    pub events: Vec<EventRecord>,
}

impl SimOutcome {
    pub fn escaped(&self) -> usize {
        self.records.iter().filter(|r| r.fate == Fate::Escaped).count()
    }

    pub fn perished(&self) -> usize {
        self.records.len() - self.escaped()
    }

    pub fn record(&self, id: EvacueeId) -> Option<&EvacueeRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Hop(VertexId),
    /// Stay one more tick; the evacuee rejoins the back of the queue.
    Hold,
}

/// Read-only view of the running simulation handed to routing policies.
pub struct World<'a> {
    pub scenario: &'a Scenario,
    pub hazard: &'a HazardField,
    /// Number of evacuees queued at each vertex.
    pub queue_len: &'a [u32],
    pub tick: Tick,
}

pub trait RoutingPolicy {
    fn name(&self) -> &'static str;

    /// Live policies are consulted at every landmark, which costs one
    /// exchange per landmark reached. Source-routed policies exchange once.
    fn is_live(&self) -> bool {
        true
    }

    /// Called once per tick before any next-hop request.
    fn begin_tick(&mut self, _world: &World, _rng: &mut SimRng, _counters: &mut Counters) {}

    /// Next vertex for `evacuee` currently at `at`; must be adjacent to `at`.
    fn next_hop(
        &mut self,
        evacuee: EvacueeId,
        at: VertexId,
        world: &World,
        rng: &mut SimRng,
        counters: &mut Counters,
    ) -> Decision;
}

/// Follows a fixed vertex sequence per evacuee. Issues no routing queries.
#[derive(Debug, Clone, Default)]
pub struct SourceRoutedPolicy {
    routes: BTreeMap<EvacueeId, Vec<VertexId>>,
    cursor: BTreeMap<EvacueeId, usize>,
}

impl SourceRoutedPolicy {
    pub fn new(routes: BTreeMap<EvacueeId, Vec<VertexId>>) -> Self {
        SourceRoutedPolicy { routes, cursor: BTreeMap::new() }
    }
}

impl RoutingPolicy for SourceRoutedPolicy {
    fn name(&self) -> &'static str {
        "source-routed"
    }

    fn is_live(&self) -> bool {
        false
    }

    fn next_hop(
        &mut self,
        evacuee: EvacueeId,
        at: VertexId,
        _world: &World,
        _rng: &mut SimRng,
        counters: &mut Counters,
    ) -> Decision {
        counters.bump(OpClass::SourceRouteLookup);
        let Some(route) = self.routes.get(&evacuee) else {
            return Decision::Hold;
        };
        let i = self.cursor.entry(evacuee).or_insert(0);
        debug_assert_eq!(route.get(*i), Some(&at), "evacuee {evacuee} off its route");
        match route.get(*i + 1) {
            Some(&next) => {
                *i += 1;
                Decision::Hop(next)
            }
            None => Decision::Hold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Queued,
    Traversing,
    Escaped,
    Perished,
}

#[derive(Debug, Clone)]
struct Agent {
    id: EvacueeId,
    initial: VertexId,
    status: Status,
    terminal: Tick,
    path: Vec<PathStep>,
    exchanges: u32,
    died_on_edge: bool,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    agent: usize,
    depart: Tick,
    hop: Option<VertexId>,
}

#[derive(Debug, Clone, Copy)]
struct Transit {
    agent: usize,
    edge: usize,
    to: VertexId,
    arrive: Tick,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub fire_seed: u64,
    pub behavior_seed: u64,
    pub record_events: bool,
}

impl RunOptions {
    pub fn new(fire_seed: u64, behavior_seed: u64) -> Self {
        RunOptions { fire_seed, behavior_seed, record_events: false }
    }

    pub fn with_events(mut self) -> Self {
        self.record_events = true;
        self
    }
}

pub fn run_simulation(
    scenario: &Scenario,
    policy: &mut dyn RoutingPolicy,
    fire_seed: u64,
    behavior_seed: u64,
) -> SimOutcome {
    run_simulation_with(scenario, policy, &RunOptions::new(fire_seed, behavior_seed))
}

pub fn run_simulation_with(
    scenario: &Scenario,
    policy: &mut dyn RoutingPolicy,
    opts: &RunOptions,
) -> SimOutcome {
    Engine::new(scenario, opts).run(policy)
}

struct Engine<'a> {
    scenario: &'a Scenario,
    hazard: HazardField,
    fire_rng: SimRng,
    behavior_rng: SimRng,
    agents: Vec<Agent>,
    queues: Vec<VecDeque<Slot>>,
    transits: Vec<Transit>,
    queue_len: Vec<u32>,
    /// Latest departure tick handed out at each vertex and how many
    /// departures it already holds.
    release: Vec<Option<(Tick, u32)>>,
    timeline: Timeline,
    counters: Counters,
    events: Option<Vec<EventRecord>>,
    active: usize,
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario, opts: &RunOptions) -> Self {
        let n = scenario.graph.len();
        let agents = scenario
            .occupancy
            .iter()
            .map(|(&id, &v)| Agent {
                id,
                initial: v,
                status: Status::Queued,
                terminal: 0,
                path: Vec::new(),
                exchanges: 0,
                died_on_edge: false,
            })
            .collect::<Vec<_>>();
        Engine {
            scenario,
            hazard: HazardField::new(n),
            fire_rng: seeds::rng(opts.fire_seed),
            behavior_rng: seeds::rng(opts.behavior_seed),
            active: agents.len(),
            agents,
            queues: vec![VecDeque::new(); n],
            transits: Vec::new(),
            queue_len: vec![0; n],
            release: vec![None; n],
            timeline: Timeline::default(),
            counters: Counters::default(),
            events: opts.record_events.then(Vec::new),
        }
    }

    fn log(&mut self, tick: Tick, agent: usize, kind: EventKind, vertex: VertexId) {
        if let Some(ev) = self.events.as_mut() {
            ev.push(EventRecord { tick, evacuee: self.agents[agent].id, kind, vertex });
        }
    }

    fn run(mut self, policy: &mut dyn RoutingPolicy) -> SimOutcome {
        let params = &self.scenario.params;
        let cap = params.tick_cap;
        let live = policy.is_live();

        self.hazard.ignite(self.scenario.hazard_origin, 0, params.fire.growth_rate);
        self.counters.bump(OpClass::HazardUpdate);
        for a in 0..self.agents.len() {
            let v = self.agents[a].initial;
            self.join_queue(a, v, 0, 0);
            self.log(0, a, EventKind::Placed, v);
            self.agents[a].exchanges = if live { self.landmark(v) } else { 1 };
        }
        self.decide(policy, 0);
        self.record();

        let mut truncated = false;
        let mut t: Tick = 0;
        while self.active > 0 {
            t += 1;
            self.hazard_phase(t);
            self.deaths(t);
            self.departures(t);
            self.arrivals(t, live);
            self.decide(policy, t);
            if t >= cap && self.active > 0 {
                truncated = true;
                self.truncate(t);
            }
            self.record();
        }

        let total_duration = self.agents.iter().map(|a| a.terminal).max().unwrap_or(0);
        let records = self
            .agents
            .into_iter()
            .map(|a| EvacueeRecord {
                id: a.id,
                initial: a.initial,
                fate: if a.status == Status::Escaped { Fate::Escaped } else { Fate::Perished },
                terminal_tick: a.terminal,
                realized_path: a.path,
                exchange_count: a.exchanges,
                died_on_edge: a.died_on_edge,
            })
            .collect();
        SimOutcome {
            records,
            timeline: self.timeline,
            total_duration,
            counters: self.counters,
            truncated,
            events: self.events.unwrap_or_default(),
        }
    }

    fn landmark(&self, v: VertexId) -> u32 {
        self.scenario.graph.vertex(v).landmark as u32
    }

    fn join_queue(&mut self, agent: usize, v: VertexId, t: Tick, extra: Tick) {
        let d = self.scenario.graph.vertex(v).departure_rate;
        let per_tick = d * self.scenario.params.tick_seconds;
        let q = &mut self.queues[v.index()];
        let ahead = q.len() as u32;
        let mut depart = t + extra + queue_ticks(ahead, d, self.scenario.params.tick_seconds);
        // Never overtake the tail, and never release more than the vertex's
        // capacity per tick.
        if let Some((last, used)) = self.release[v.index()] {
            let floor = if per_tick >= 1.0 {
                last + (used as f64 >= (per_tick + 1e-9).floor()) as Tick
            } else {
                last + (1.0 / per_tick - 1e-9).ceil() as Tick
            };
            depart = depart.max(floor);
        }
        self.release[v.index()] = match self.release[v.index()] {
            Some((last, used)) if last == depart => Some((last, used + 1)),
            _ => Some((depart, 1)),
        };
        q.push_back(Slot { agent, depart, hop: None });
        self.queue_len[v.index()] += 1;
        let ag = &mut self.agents[agent];
        ag.status = Status::Queued;
        if extra == 0 {
            ag.path.push(PathStep { vertex: v, arrive: t, depart: None });
        }
        self.counters.bump(OpClass::EngineEvent);
    }

    fn hazard_phase(&mut self, t: Tick) {
        let params = &self.scenario.params.fire;
        let burning = self.hazard.burning() as u64;
        let draws = self.hazard.step(&self.scenario.graph, params, &mut self.fire_rng, t);
        self.counters.add(OpClass::HazardUpdate, burning + draws as u64);
    }

    fn kill(&mut self, agent: usize, t: Tick, on_edge: bool) {
        let ag = &mut self.agents[agent];
        ag.status = Status::Perished;
        ag.terminal = t;
        ag.died_on_edge = on_edge;
        self.active -= 1;
        self.counters.bump(OpClass::EngineEvent);
    }

    fn deaths(&mut self, t: Tick) {
        let fire = &self.scenario.params.fire;
        let graph = &self.scenario.graph;
        let mut dead = Vec::new();
        for v in 0..self.queues.len() {
            let vid = VertexId(v as u32);
            if !self.queues[v].is_empty() && self.hazard.is_lethal(fire, vid) {
                for s in self.queues[v].drain(..) {
                    dead.push((s.agent, vid, false));
                }
                self.queue_len[v] = 0;
            }
        }
        let hazard = &self.hazard;
        self.transits.retain(|tr| {
            let lethal = hazard.edge_intensity(graph.edge(tr.edge)) >= fire.lethal_threshold;
            if lethal {
                dead.push((tr.agent, tr.to, true));
            }
            !lethal
        });
        dead.sort_by_key(|d| d.0);
        for (a, v, on_edge) in dead {
            self.kill(a, t, on_edge);
            self.log(t, a, EventKind::Perish, v);
        }
    }

    fn departures(&mut self, t: Tick) {
        let graph = &self.scenario.graph;
        let params = &self.scenario.params;
        for v in 0..self.queues.len() {
            while self.queues[v].front().is_some_and(|s| s.depart <= t) {
                let slot = self.queues[v].pop_front().unwrap();
                self.queue_len[v] -= 1;
                let from = VertexId(v as u32);
                let to = slot.hop.expect("departing evacuee has a decision");
                let edge = graph.edge_between(from, to).expect("decided hop is adjacent");
                let secs = graph.edge(edge).length / params.walking_speed;
                let arrive = t + ticks_for(secs, params.tick_seconds);
                let ag = &mut self.agents[slot.agent];
                ag.status = Status::Traversing;
                ag.path.last_mut().expect("agent has a position").depart = Some(t);
                self.transits.push(Transit { agent: slot.agent, edge, to, arrive });
                self.counters.bump(OpClass::EngineEvent);
                self.log(t, slot.agent, EventKind::Depart, from);
            }
        }
    }

    fn arrivals(&mut self, t: Tick, live: bool) {
        let mut arriving: Vec<Transit> = Vec::new();
        self.transits.retain(|tr| {
            if tr.arrive <= t {
                arriving.push(*tr);
                false
            } else {
                true
            }
        });
        arriving.sort_by_key(|tr| tr.agent);
        for tr in arriving {
            if self.scenario.graph.is_exit(tr.to) {
                let ag = &mut self.agents[tr.agent];
                ag.status = Status::Escaped;
                ag.terminal = t;
                ag.path.push(PathStep { vertex: tr.to, arrive: t, depart: None });
                self.active -= 1;
                self.counters.bump(OpClass::EngineEvent);
                self.log(t, tr.agent, EventKind::Escape, tr.to);
            } else {
                self.join_queue(tr.agent, tr.to, t, 0);
                self.log(t, tr.agent, EventKind::Arrive, tr.to);
            }
            if live {
                self.agents[tr.agent].exchanges += self.landmark(tr.to);
            }
        }
    }

    fn decide(&mut self, policy: &mut dyn RoutingPolicy, t: Tick) {
        if self.active == 0 {
            return;
        }
        let world = World {
            scenario: self.scenario,
            hazard: &self.hazard,
            queue_len: &self.queue_len,
            tick: t,
        };
        policy.begin_tick(&world, &mut self.behavior_rng, &mut self.counters);

        let graph = &self.scenario.graph;
        let mut holds: Vec<(usize, usize, VertexId)> = Vec::new();
        for v in 0..self.queues.len() {
            let vid = VertexId(v as u32);
            let mut i = 0;
            while i < self.queues[v].len() {
                let slot = self.queues[v][i];
                if slot.depart > t + 1 {
                    break;
                }
                if slot.hop.is_none() {
                    let id = self.agents[slot.agent].id;
                    match policy.next_hop(id, vid, &world, &mut self.behavior_rng, &mut self.counters) {
                        Decision::Hop(w) => {
                            assert!(
                                graph.edge_between(vid, w).is_some(),
                                "policy {} sent evacuee {id} from {vid} to non-adjacent {w}",
                                policy.name()
                            );
                            self.queues[v][i].hop = Some(w);
                        }
                        Decision::Hold => holds.push((i, slot.agent, vid)),
                    }
                }
                i += 1;
            }
        }
        // Later slots first so earlier indices stay valid.
        for &(i, _, v) in holds.iter().rev() {
            self.queues[v.index()].remove(i);
            self.queue_len[v.index()] -= 1;
        }
        for (_, a, v) in holds {
            // Rejoin as if arriving next tick so the decision is retried later.
            self.join_queue(a, v, t, 1);
            self.log(t, a, EventKind::Hold, v);
        }
    }

    fn truncate(&mut self, t: Tick) {
        for a in 0..self.agents.len() {
            if matches!(self.agents[a].status, Status::Queued | Status::Traversing) {
                let on_edge = self.agents[a].status == Status::Traversing;
                let v = self.agents[a].path.last().map(|s| s.vertex).unwrap_or(self.agents[a].initial);
                self.kill(a, t, on_edge);
                self.log(t, a, EventKind::Perish, v);
            }
        }
        for q in &mut self.queues {
            q.clear();
        }
        self.queue_len.iter_mut().for_each(|c| *c = 0);
        self.transits.clear();
    }

    fn record(&mut self) {
        self.timeline.queue_counts.push(self.queue_len.clone());
        self.timeline.hazard.push(self.hazard.intensities().to_vec());
        self.counters.add(OpClass::TimelineRecord, self.queue_len.len() as u64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{BuildingGraph, Edge, EdgeKind, SimParams, Vertex, VertexKind};

    #[test]
    fn queue_delay_examples() {
        assert_eq!(queue_delay(5, 1.0).unwrap(), 5.0);
        assert_eq!(queue_delay(0, 1.0).unwrap(), 0.0);
        assert_eq!(queue_delay(6, 2.0).unwrap(), 3.0);
        assert!(matches!(queue_delay(1, 0.0), Err(Error::Config(_))));
        assert!(matches!(queue_delay(1, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn edge_time_examples() {
        assert_eq!(edge_time(10.0, 1.0).unwrap(), 10.0);
        assert_eq!(edge_time(0.0, 1.4).unwrap(), 0.0);
        assert!((edge_time(21.0, 1.4).unwrap() - 15.0).abs() < 1e-12);
        assert!(matches!(edge_time(1.0, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn tick_rounding() {
        assert_eq!(ticks_for(21.0 / 1.4, 1.0), 15);
        assert_eq!(ticks_for(10.0, 1.0), 10);
        assert_eq!(ticks_for(10.2, 1.0), 11);
        assert_eq!(ticks_for(0.0, 1.0), 1);
        assert_eq!(queue_ticks(0, 1.0, 1.0), 1);
        assert_eq!(queue_ticks(5, 1.0, 1.0), 6);
        assert_eq!(queue_ticks(3, 2.0, 1.0), 2);
    }

    struct Toward(VertexId);

    impl RoutingPolicy for Toward {
        fn name(&self) -> &'static str {
            "toward"
        }

        fn next_hop(&mut self, _: EvacueeId, _: VertexId, _: &World, _: &mut SimRng, _: &mut Counters) -> Decision {
            Decision::Hop(self.0)
        }
    }

    fn room_exit(length: f64, speed: f64, evacuees: u32) -> Scenario {
        let g = BuildingGraph::new(
            vec![
                Vertex { id: VertexId(0), floor: 0, kind: VertexKind::Room, departure_rate: 1.0, landmark: true, pos: None },
                Vertex { id: VertexId(1), floor: 0, kind: VertexKind::Exit, departure_rate: 1.0, landmark: false, pos: None },
                Vertex { id: VertexId(2), floor: 0, kind: VertexKind::Room, departure_rate: 1.0, landmark: false, pos: None },
            ],
            vec![
                Edge { a: VertexId(0), b: VertexId(1), length, kind: EdgeKind::Doorway, spread_rate: Some(0.0) },
                Edge { a: VertexId(2), b: VertexId(1), length: 50.0, kind: EdgeKind::Doorway, spread_rate: Some(0.0) },
            ],
        )
        .unwrap();
        let params = SimParams { walking_speed: speed, ..SimParams::default() };
        let occ = (0..evacuees).map(|i| (i, VertexId(0))).collect();
        // Fire far away in the side room, never spreading.
        Scenario::new(g, VertexId(2), occ, params).unwrap()
    }

    #[test]
    fn single_evacuee_hand_trace() {
        let s = room_exit(10.0, 1.0, 1);
        let out = run_simulation_with(&s, &mut Toward(VertexId(1)), &RunOptions::new(1, 2).with_events());
        let r = &out.records[0];
        assert_eq!(r.fate, Fate::Escaped);
        assert_eq!(r.realized_path[0], PathStep { vertex: VertexId(0), arrive: 0, depart: Some(1) });
        assert_eq!(r.terminal_tick, 11);
        assert_eq!(out.total_duration, 11);
        assert_eq!(out.timeline.horizon(), 11);
        assert_eq!(out.timeline.queue(VertexId(0), 0), 1);
        assert_eq!(out.timeline.queue(VertexId(0), 1), 0);
        assert_eq!(r.exchange_count, 1);
        let kinds: Vec<_> = out.events.iter().map(|e| (e.tick, e.kind)).collect();
        assert_eq!(kinds, vec![(0, EventKind::Placed), (1, EventKind::Depart), (11, EventKind::Escape)]);
    }

    #[test]
    fn queue_releases_one_per_second() {
        let s = room_exit(10.0, 1.0, 3);
        let out = run_simulation(&s, &mut Toward(VertexId(1)), 1, 2);
        let exits: Vec<_> = out.records.iter().map(|r| r.terminal_tick).collect();
        assert_eq!(exits, vec![11, 12, 13]);
    }

    #[test]
    fn empty_building() {
        let s = room_exit(10.0, 1.0, 0);
        let out = run_simulation(&s, &mut Toward(VertexId(1)), 1, 2);
        assert_eq!(out.total_duration, 0);
        assert!(out.records.is_empty());
        assert!(!out.truncated);
    }

    #[test]
    fn tick_cap_truncates_and_kills() {
        let mut s = room_exit(100.0, 1.0, 2);
        s.params.tick_cap = 20;
        let out = run_simulation(&s, &mut Toward(VertexId(1)), 1, 2);
        assert!(out.truncated);
        assert_eq!(out.perished(), 2);
        assert!(out.records.iter().all(|r| r.terminal_tick == 20));
    }

    #[test]
    fn burning_start_kills_queued_evacuee() {
        // Fire starts under the evacuees; with a long queue the tail is
        // still waiting when the vertex turns lethal at tick 13.
        let mut s = room_exit(10.0, 1.0, 20);
        s.hazard_origin = VertexId(0);
        let out = run_simulation(&s, &mut Toward(VertexId(1)), 1, 2);
        // Departures at ticks 1..=12 escape; the rest die at tick 13.
        assert_eq!(out.escaped(), 12);
        assert!(out
            .records
            .iter()
            .filter(|r| r.fate == Fate::Perished)
            .all(|r| r.terminal_tick == 13 && !r.died_on_edge));
    }

    #[test]
    fn source_routed_policy_follows_route_then_holds() {
        let s = room_exit(10.0, 1.0, 1);
        let mut p = SourceRoutedPolicy::new(BTreeMap::from([(0, vec![VertexId(0), VertexId(1)])]));
        let out = run_simulation(&s, &mut p, 1, 2);
        assert_eq!(out.records[0].fate, Fate::Escaped);
        assert_eq!(out.records[0].exchange_count, 1);
        assert_eq!(out.counters.get(OpClass::SourceRouteLookup), 1);

        let mut stuck = SourceRoutedPolicy::new(BTreeMap::from([(0, vec![VertexId(0)])]));
        let mut s2 = s.clone();
        s2.params.tick_cap = 30;
        let out = run_simulation(&s2, &mut stuck, 1, 2);
        assert!(out.truncated);
        assert_eq!(out.records[0].fate, Fate::Perished);
    }
}
