//! Brute-force reference for the time-dependent search.
//!
//! A [`TdInstance`] holds a small building together with recorded queue and
//! hazard rows. [`TdInstance::earliest_exit_arrival`] marks every reachable
//! (vertex, arrival tick) cell of the explicit time-expanded graph, tick by
//! tick, and reports the first tick an exit is reached. It shares no code
//! with the search in [`crate::routing`] beyond reading the instance.
//!
//! [`random_scenario`] generates small complete scenarios for property tests.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::analytics::Counters;
use crate::routing::{td_dijkstra, MetricFault, OccupancyTimeline, TdParams, TimedPath};
use crate::scenario::{generate_occupancy, BuildingGraph, Edge, EdgeKind, Scenario, SimParams, Vertex, VertexId, VertexKind};
use crate::seeds::{self, SimRng};
use crate::Tick;

#[derive(Debug, Clone)]
pub struct TdInstance {
    pub graph: BuildingGraph,
    /// `queue[t][v]` for `t` in `0..=horizon`; constant afterwards.
    pub queue: Vec<Vec<u32>>,
    pub hazard: Vec<Vec<f64>>,
    pub from: VertexId,
    pub t0: Tick,
    pub params: TdParams,
}

impl TdInstance {
    /// Snapshot of a search problem, sampling the timeline up to the point
    /// where it turns constant.
    pub fn from_parts(
        graph: &BuildingGraph,
        tl: &OccupancyTimeline,
        from: VertexId,
        t0: Tick,
        params: &TdParams,
    ) -> Self {
        let h = tl.stationary_after();
        let verts: Vec<VertexId> = graph.vertices().iter().map(|v| v.id).collect();
        let queue = (0..=h).map(|t| verts.iter().map(|&v| tl.queue(v, t)).collect()).collect();
        let hazard = (0..=h).map(|t| verts.iter().map(|&v| tl.hazard(v, t)).collect()).collect();
        TdInstance { graph: graph.clone(), queue, hazard, from, t0, params: params.clone() }
    }

    pub fn timeline(&self) -> OccupancyTimeline {
        OccupancyTimeline::new(self.queue.clone(), self.hazard.clone())
    }

    fn horizon(&self) -> Tick {
        (self.queue.len() - 1) as Tick
    }

    fn q(&self, v: usize, t: Tick) -> u32 {
        self.queue[(t as usize).min(self.queue.len() - 1)][v]
    }

    fn h(&self, v: usize, t: Tick) -> f64 {
        self.hazard[(t as usize).min(self.hazard.len() - 1)][v]
    }

    fn wait(&self, v: usize, t: Tick) -> Tick {
        let d = self.graph.vertices()[v].departure_rate;
        let per_tick = d * self.params.tick_seconds;
        1 + (self.q(v, t) as f64 / per_tick + 1e-9).floor() as Tick
    }

    fn walk(&self, length: f64, a: usize, b: usize, depart: Tick) -> Tick {
        let i = (self.h(a, depart) + self.h(b, depart)) / 2.0;
        let e = if i > 0.0 { length * (1.0 + self.params.hazard_penalty * i) } else { length };
        let ticks = (e / self.params.walking_speed / self.params.tick_seconds - 1e-9).ceil();
        (ticks as Tick).max(1)
    }

    fn hop_bound(&self) -> Tick {
        let dmin = self.graph.vertices().iter().map(|v| v.departure_rate).fold(f64::INFINITY, f64::min);
        let qmax = self.queue.iter().flatten().copied().max().unwrap_or(0);
        let lmax = self.graph.edges().iter().map(|e| e.length).fold(0.0, f64::max);
        let wait = 2 + (qmax as f64 / (dmin * self.params.tick_seconds)).ceil() as Tick;
        let walk = 2 + (lmax * (1.0 + self.params.hazard_penalty) / self.params.walking_speed / self.params.tick_seconds)
            .ceil() as Tick;
        wait + walk
    }

    /// Last tick worth exploring: any walk can be rearranged into one that
    /// enters the constant part of the timeline within one hop and then
    /// follows a simple path.
    pub fn search_bound(&self) -> Tick {
        self.horizon().max(self.t0) + (self.graph.len() as Tick + 1) * self.hop_bound()
    }

    /// Departure and arrival tick of crossing `a -> b` after arriving at `a`
    /// at `t`, or `None` when the wait or the crossing is lethal.
    fn hop(&self, a: usize, b: usize, length: f64, t: Tick) -> Option<(Tick, Tick)> {
        let lethal = self.params.lethal_threshold;
        let dep = t + self.wait(a, t);
        if (t + 1..=dep).any(|s| self.h(a, s) >= lethal) {
            return None;
        }
        let arr = dep + self.walk(length, a, b, dep);
        let hb = self.horizon() + 1;
        let edge_end = arr.min(hb.max(dep + 1));
        if (dep + 1..=edge_end).any(|s| (self.h(a, s) + self.h(b, s)) / 2.0 >= lethal) {
            return None;
        }
        Some((dep, arr))
    }

    /// Earliest tick any exit can be reached, or `None` if none can.
    pub fn earliest_exit_arrival(&self) -> Option<Tick> {
        let n = self.graph.len();
        let bound = self.search_bound();
        let span = (bound - self.t0 + 1) as usize;
        let mut reach = vec![vec![false; n]; span];
        reach[0][self.from.index()] = true;
        let adj: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|v| {
                self.graph
                    .edges()
                    .iter()
                    .filter_map(|e| {
                        if e.a.index() == v {
                            Some((e.b.index(), e.length))
                        } else if e.b.index() == v {
                            Some((e.a.index(), e.length))
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        for off in 0..span {
            let t = self.t0 + off as Tick;
            for v in 0..n {
                if !reach[off][v] {
                    continue;
                }
                if self.graph.vertices()[v].kind == VertexKind::Exit {
                    return Some(t);
                }
            }
            for v in 0..n {
                if !reach[off][v] {
                    continue;
                }
                for &(w, len) in &adj[v] {
                    if let Some((_, arr)) = self.hop(v, w, len, t) {
                        let o = (arr - self.t0) as usize;
                        if o < span {
                            reach[o][w] = true;
                        }
                    }
                }
            }
        }
        None
    }

    /// Re-derives the arrival ticks of `path` under the instance rules.
    pub fn replay(&self, path: &TimedPath) -> Result<Tick, String> {
        let first = path.steps.first().ok_or("empty path")?;
        if first.vertex != self.from || first.arrive != self.t0 {
            return Err(format!("path starts at {}@{}", first.vertex, first.arrive));
        }
        let mut t = self.t0;
        for w in path.steps.windows(2) {
            let (a, b) = (w[0].vertex, w[1].vertex);
            let e = self.graph.edge_between(a, b).ok_or(format!("{a} and {b} are not adjacent"))?;
            let (dep, arr) = self
                .hop(a.index(), b.index(), self.graph.edge(e).length, t)
                .ok_or(format!("hop {a} -> {b} at tick {t} is lethal"))?;
            if w[0].depart != Some(dep) || w[1].arrive != arr {
                return Err(format!("hop {a} -> {b}: planned {:?}/{} vs {dep}/{arr}", w[0].depart, w[1].arrive));
            }
            t = arr;
        }
        let last = path.steps.last().unwrap();
        if !self.graph.is_exit(last.vertex) {
            return Err(format!("path ends at {}, not an exit", last.vertex));
        }
        Ok(t)
    }
}

/// Random small instance: up to 8 vertices, recorded horizon up to 20 ticks,
/// monotone fire, queues of up to 5.
pub fn random_instance(rng: &mut SimRng) -> TdInstance {
    let n = rng.gen_range(2..=8u32);
    let n_exits = if n > 3 { rng.gen_range(1..=2u32) } else { 1 };
    let mut ids: Vec<u32> = (0..n).collect();
    ids.shuffle(rng);
    let exits = &ids[..n_exits as usize];
    let vertices: Vec<Vertex> = (0..n)
        .map(|i| Vertex {
            id: VertexId(i),
            floor: 0,
            kind: if exits.contains(&i) { VertexKind::Exit } else { VertexKind::Room },
            departure_rate: *[0.5, 1.0, 2.0].choose(rng).unwrap(),
            landmark: false,
            pos: None,
        })
        .collect();
    let mut edges = Vec::new();
    let length = |rng: &mut SimRng| rng.gen_range(1..=15u32) as f64;
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edges.push(Edge { a: VertexId(j), b: VertexId(i), length: length(rng), kind: EdgeKind::Corridor, spread_rate: None });
    }
    for i in 0..n {
        for j in i + 1..n {
            let present = edges.iter().any(|e| e.a == VertexId(i) && e.b == VertexId(j));
            if !present && rng.gen_bool(0.25) {
                edges.push(Edge { a: VertexId(i), b: VertexId(j), length: length(rng), kind: EdgeKind::Corridor, spread_rate: None });
            }
        }
    }
    let graph = BuildingGraph::new(vertices, edges).expect("generated graph is valid");

    let h = rng.gen_range(0..=20u32);
    let growth = *[0.05, 0.1, 0.3].choose(rng).unwrap();
    let ignition: Vec<Option<Tick>> = (0..n)
        .map(|_| rng.gen_bool(0.5).then(|| rng.gen_range(0..=h)))
        .collect();
    let hazard = (0..=h)
        .map(|t| {
            ignition
                .iter()
                .map(|ig| match ig {
                    Some(s) if t >= *s => (growth * (t - s + 1) as f64).min(1.0),
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    let queue = (0..=h)
        .map(|_| {
            (0..n)
                .map(|v| if graph.is_exit(VertexId(v)) { 0 } else { rng.gen_range(0..=5u32) })
                .collect()
        })
        .collect();
    let starts: Vec<VertexId> = graph.non_exits().collect();
    let from = *starts.choose(rng).unwrap();
    let t0 = rng.gen_range(0..=h.min(5));
    let params = TdParams {
        walking_speed: *[1.0, 1.4, 2.0].choose(rng).unwrap(),
        tick_seconds: 1.0,
        lethal_threshold: 0.7,
        hazard_penalty: *[0.5, 2.0, 1000.0].choose(rng).unwrap(),
        fault: None,
    };
    TdInstance { graph, queue, hazard, from, t0, params }
}

/// Random small connected scenario: 3 to 12 vertices, one or two exits, up to
/// 15 evacuees, fast fire and a short CPN warm-up.
pub fn random_scenario(rng: &mut SimRng) -> Scenario {
    let n = rng.gen_range(3..=12u32);
    let n_exits = rng.gen_range(1..=2u32);
    let kinds = [VertexKind::Corridor, VertexKind::Doorway, VertexKind::Room, VertexKind::Staircase];
    let vertices: Vec<Vertex> = (0..n)
        .map(|i| Vertex {
            id: VertexId(i),
            floor: 0,
            kind: if i < n_exits { VertexKind::Exit } else { *kinds.choose(rng).unwrap() },
            departure_rate: *[0.5, 1.0, 2.0].choose(rng).unwrap(),
            landmark: rng.gen_bool(0.5),
            pos: None,
        })
        .collect();
    let edge_kinds = [EdgeKind::Corridor, EdgeKind::Doorway, EdgeKind::Staircase];
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let length = rng.gen_range(1..=20u32) as f64;
        edges.push(Edge { a: VertexId(j), b: VertexId(i), length, kind: *edge_kinds.choose(rng).unwrap(), spread_rate: None });
    }
    for _ in 0..rng.gen_range(0..=n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && !edges.iter().any(|e| (e.a.0, e.b.0) == (a, b) || (e.a.0, e.b.0) == (b, a)) {
            let length = rng.gen_range(1..=20u32) as f64;
            edges.push(Edge { a: VertexId(a), b: VertexId(b), length, kind: *edge_kinds.choose(rng).unwrap(), spread_rate: None });
        }
    }
    let graph = BuildingGraph::new(vertices, edges).expect("generated graph is valid");

    let mut params = SimParams::default();
    let rates = &mut params.fire.spread_rate_by_kind;
    rates.corridor = *[0.05, 0.2, 0.5].choose(rng).unwrap();
    rates.doorway = *[0.05, 0.2, 0.5].choose(rng).unwrap();
    rates.staircase = *[0.05, 0.2].choose(rng).unwrap();
    params.fire.growth_rate = *[0.05, 0.1, 0.2].choose(rng).unwrap();
    params.walking_speed = *[1.0, 1.4].choose(rng).unwrap();
    params.tick_cap = 600;
    params.cpn.warmup_ticks = rng.gen_range(0..=5);

    let origins: Vec<VertexId> = graph.non_exits().collect();
    let origin = *origins.choose(rng).unwrap();
    let occupancy = generate_occupancy(&graph, rng.gen_range(0..=15), rng.gen());
    Scenario::new(graph, origin, occupancy, params).expect("generated scenario is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub instance: usize,
    pub search: Option<Tick>,
    pub oracle: Option<Tick>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub instances: usize,
    pub unsavable: usize,
    pub mismatches: Vec<Mismatch>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Runs the search against the oracle on `count` seeded random instances.
/// The search's path must replay under the oracle's rules and reach the exit
/// at exactly the oracle's earliest tick.
pub fn oracle_check(count: usize, seed: u64, fault: Option<MetricFault>) -> OracleReport {
    let mut report = OracleReport { instances: count, unsavable: 0, mismatches: Vec::new() };
    for i in 0..count {
        let mut rng = seeds::rng(seeds::derive(seed, i as u64));
        let inst = random_instance(&mut rng);
        let oracle = inst.earliest_exit_arrival();
        let mut params = inst.params.clone();
        params.fault = fault;
        let found = td_dijkstra(&inst.graph, &inst.timeline(), inst.from, inst.t0, &params, &mut Counters::default());
        let search = found.as_ref().map(TimedPath::exit_arrival);
        if oracle.is_none() {
            report.unsavable += 1;
        }
        let detail = match (&found, oracle) {
            (Some(p), Some(best)) => match inst.replay(p) {
                Ok(t) if t == best && p.exit_arrival() == best => None,
                Ok(t) => Some(format!("path arrives at {t}, oracle best {best}")),
                Err(e) => Some(e),
            },
            (None, None) => None,
            (Some(_), None) => Some("search found a path the oracle rules out".into()),
            (None, Some(_)) => Some("search found no path".into()),
        };
        if let Some(detail) = detail {
            report.mismatches.push(Mismatch { instance: i, search, oracle, detail });
        }
    }
    report
}
