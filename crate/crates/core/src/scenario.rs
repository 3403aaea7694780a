//! Building graph model and scenario documents.
//!
//! A scenario is a single JSON document with four sections:
//!
//! ```json
//! {
//!   "graph": { "vertices": [...], "edges": [...] },
//!   "hazard_origin": 12,
//!   "occupancy": { "0": 5, "1": 17 },
//!   "params": { "walking_speed": 1.4, "fire": { ... }, "cpn": { ... } }
//! }
//! ```
//!
//! Vertex ids must be exactly `0..n`; they double as dense indices. Omitted
//! parameters take their defaults. See `docs/scenario-format.md` for the
//! field-by-field reference.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::CycleModel;
use crate::cpn::CpnParams;
use crate::hazard::FireParams;
use crate::seeds;
use crate::{Error, Result};

pub type Tick = u32;
pub type EvacueeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Room,
    Corridor,
    Doorway,
    Staircase,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Corridor,
    Doorway,
    Staircase,
}

fn default_departure_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    #[serde(default)]
    pub floor: i32,
    pub kind: VertexKind,
    /// Evacuees released per second.
    #[serde(default = "default_departure_rate")]
    pub departure_rate: f64,
    /// Point of interest where an evacuee can localize and exchange data.
    #[serde(default)]
    pub landmark: bool,
    /// Layout hint in meters within the floor, used only for drawing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<[f64; 2]>,
}

impl Vertex {
    pub fn is_exit(&self) -> bool {
        self.kind == VertexKind::Exit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: VertexId,
    pub b: VertexId,
    /// Physical length in meters.
    pub length: f64,
    pub kind: EdgeKind,
    /// Per-tick ignition probability; falls back to the fire parameters'
    /// rate for this edge kind when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread_rate: Option<f64>,
}

impl Edge {
    pub fn other(&self, v: VertexId) -> VertexId {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Neighbor entry in the adjacency list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub to: VertexId,
    pub edge: usize,
}

#[derive(Debug, Clone, Deserialize)]
struct GraphDoc {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

/// Undirected, connected building graph with at least one exit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GraphDoc")]
pub struct BuildingGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    #[serde(skip)]
    adjacency: Vec<Vec<Link>>,
}

impl PartialEq for BuildingGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.edges == other.edges
    }
}

impl TryFrom<GraphDoc> for BuildingGraph {
    type Error = Error;

    fn try_from(doc: GraphDoc) -> Result<Self> {
        BuildingGraph::new(doc.vertices, doc.edges)
    }
}

impl BuildingGraph {
    pub fn new(mut vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        vertices.sort_by_key(|v| v.id);
        for (i, v) in vertices.iter().enumerate() {
            if v.id.index() != i {
                return Err(Error::Validation(format!(
                    "vertex ids must be exactly 0..{}; found {} at position {i}",
                    vertices.len(),
                    v.id
                )));
            }
            if !(v.departure_rate > 0.0 && v.departure_rate.is_finite()) {
                return Err(Error::Validation(format!(
                    "vertex {} has nonpositive departure rate {}",
                    v.id, v.departure_rate
                )));
            }
        }
        if !vertices.iter().any(Vertex::is_exit) {
            return Err(Error::Validation("no exit".into()));
        }

        let n = vertices.len();
        let mut adjacency = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            if e.a.index() >= n || e.b.index() >= n {
                return Err(Error::Validation(format!(
                    "edge {i} has dangling endpoint ({}, {})",
                    e.a, e.b
                )));
            }
            if e.a == e.b {
                return Err(Error::Validation(format!("edge {i} is a self-loop on {}", e.a)));
            }
            if !(e.length > 0.0 && e.length.is_finite()) {
                return Err(Error::Validation(format!(
                    "edge {i} has nonpositive length {}",
                    e.length
                )));
            }
            if let Some(p) = e.spread_rate {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(format!(
                        "edge {i} spread rate {p} outside [0, 1]"
                    )));
                }
            }
            adjacency[e.a.index()].push(Link { to: e.b, edge: i });
            adjacency[e.b.index()].push(Link { to: e.a, edge: i });
        }
        for (v, links) in adjacency.iter_mut().enumerate() {
            links.sort_by_key(|l| l.to);
            if links.windows(2).any(|w| w[0].to == w[1].to) {
                return Err(Error::Validation(format!("duplicate edge at vertex {v}")));
            }
        }

        // Connectivity: one flood fill from vertex 0 must reach everything.
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for l in &adjacency[u] {
                if !seen[l.to.index()] {
                    seen[l.to.index()] = true;
                    stack.push(l.to.index());
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("graph is disconnected at vertex {v}")));
        }

        Ok(BuildingGraph { vertices, edges, adjacency })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v.index()]
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.index() < self.vertices.len()
    }

    pub fn is_exit(&self, v: VertexId) -> bool {
        self.vertices[v.index()].is_exit()
    }

    /// Neighbors sorted by ascending vertex id.
    pub fn neighbors(&self, v: VertexId) -> &[Link] {
        &self.adjacency[v.index()]
    }

    pub fn edge_between(&self, u: VertexId, v: VertexId) -> Option<usize> {
        self.adjacency[u.index()]
            .binary_search_by_key(&v, |l| l.to)
            .ok()
            .map(|i| self.adjacency[u.index()][i].edge)
    }

    pub fn exits(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().filter(|v| v.is_exit()).map(|v| v.id)
    }

    pub fn non_exits(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().filter(|v| !v.is_exit()).map(|v| v.id)
    }

    /// Multi-source Dijkstra from every exit under an arbitrary edge weight.
    /// Returns the distance to the nearest exit for each vertex.
    pub fn exit_distances(&self, mut weight: impl FnMut(usize, &Edge) -> f64) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        for x in self.exits() {
            dist[x.index()] = 0.0;
            heap.push(HeapItem { cost: 0.0, vertex: x });
        }
        while let Some(HeapItem { cost, vertex }) = heap.pop() {
            if cost > dist[vertex.index()] {
                continue;
            }
            for l in self.neighbors(vertex) {
                let c = cost + weight(l.edge, &self.edges[l.edge]);
                if c < dist[l.to.index()] {
                    dist[l.to.index()] = c;
                    heap.push(HeapItem { cost: c, vertex: l.to });
                }
            }
        }
        dist
    }
}

/// Min-heap entry ordered by cost, then by smaller vertex id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct HeapItem {
    pub cost: f64,
    pub vertex: VertexId,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Average walking speed V_s in m/s.
    pub walking_speed: f64,
    pub tick_seconds: f64,
    /// Multiplier K in the effective length `L + K * intensity * L`.
    pub hazard_penalty: f64,
    pub tick_cap: Tick,
    pub fire: FireParams,
    pub cpn: CpnParams,
    pub cycle: CycleModel,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            walking_speed: 1.4,
            tick_seconds: 1.0,
            hazard_penalty: 1000.0,
            tick_cap: 3600,
            fire: FireParams::default(),
            cpn: CpnParams::default(),
            cycle: CycleModel::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.walking_speed > 0.0 && self.walking_speed.is_finite()) {
            return Err(Error::Config(format!(
                "walking speed must be positive, got {}",
                self.walking_speed
            )));
        }
        if !(self.tick_seconds > 0.0 && self.tick_seconds.is_finite()) {
            return Err(Error::Config(format!(
                "tick length must be positive, got {}",
                self.tick_seconds
            )));
        }
        if !(self.hazard_penalty >= 0.0) {
            return Err(Error::Config("hazard penalty must be nonnegative".into()));
        }
        self.fire.validate()?;
        self.cpn.validate()?;
        self.cycle.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ScenarioDoc {
    graph: GraphDoc,
    hazard_origin: VertexId,
    #[serde(default)]
    occupancy: BTreeMap<EvacueeId, VertexId>,
    #[serde(default)]
    params: SimParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioDoc")]
pub struct Scenario {
    pub graph: BuildingGraph,
    pub hazard_origin: VertexId,
    /// Initial position of each evacuee.
    pub occupancy: BTreeMap<EvacueeId, VertexId>,
    pub params: SimParams,
}

impl TryFrom<ScenarioDoc> for Scenario {
    type Error = Error;

    fn try_from(doc: ScenarioDoc) -> Result<Self> {
        let graph = BuildingGraph::new(doc.graph.vertices, doc.graph.edges)?;
        Scenario::new(graph, doc.hazard_origin, doc.occupancy, doc.params)
    }
}

impl Scenario {
    pub fn new(
        graph: BuildingGraph,
        hazard_origin: VertexId,
        occupancy: BTreeMap<EvacueeId, VertexId>,
        params: SimParams,
    ) -> Result<Self> {
        if !graph.contains(hazard_origin) || graph.is_exit(hazard_origin) {
            return Err(Error::Validation(format!(
                "hazard origin {hazard_origin} must be a non-exit vertex"
            )));
        }
        for (id, v) in &occupancy {
            if !graph.contains(*v) || graph.is_exit(*v) {
                return Err(Error::Validation(format!(
                    "evacuee {id} starts at {v}, which is not a valid non-exit vertex"
                )));
            }
        }
        params.validate()?;
        Ok(Scenario { graph, hazard_origin, occupancy, params })
    }

    /// Same scenario with a different initial occupancy.
    pub fn with_occupancy(&self, occupancy: BTreeMap<EvacueeId, VertexId>) -> Result<Self> {
        Scenario::new(self.graph.clone(), self.hazard_origin, occupancy, self.params.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

pub fn load_scenario(text: &str) -> Result<Scenario> {
    // Parse the raw document first so validation failures stay distinct from
    // syntax errors.
    let doc: ScenarioDoc = serde_json::from_str(text)?;
    Scenario::try_from(doc)
}

/// Shortest physical distance from `v` to the nearest exit.
pub fn static_distance_to_exit(graph: &BuildingGraph, v: VertexId) -> Result<f64> {
    let d = graph.exit_distances(|_, e| e.length)[v.index()];
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::Unreachable(v))
    }
}

/// Places `n` evacuees uniformly over the non-exit vertices.
///
/// Evacuee `i` (for `i` in `0..n`) is placed at `non_exits[r_i]` where the
/// non-exit vertices are sorted by id and `r_i` is the `i`-th draw of
/// `gen_range(0..m as u32)` from a ChaCha8 stream seeded with `seed`.
pub fn generate_occupancy(
    graph: &BuildingGraph,
    n: u32,
    seed: u64,
) -> BTreeMap<EvacueeId, VertexId> {
    let candidates: Vec<VertexId> = graph.non_exits().collect();
    let mut rng = seeds::rng(seed);
    (0..n)
        .map(|i| {
            let k = rng.gen_range(0..candidates.len() as u32);
            (i, candidates[k as usize])
        })
        .collect()
}

const REF_COLS: u32 = 9;
const REF_ROWS: u32 = 9;
const REF_FLOORS: u32 = 3;
const REF_SPACING: f64 = 8.0;
const REF_STAIR_LENGTH: f64 = 12.0;
const REF_LAYOUT_SEED: u64 = 0x4D41_4C4C;
/// Evacuees per second through a staircase landing; stairs are the building's
/// bottleneck.
const REF_STAIR_RATE: f64 = 0.25;

/// Synthetic three-floor shopping mall with 243 vertices and two ground-floor
/// exits.
///
/// Each floor is a 9 x 9 cell layout with 8 m spacing: a perimeter corridor
/// ring plus a main east-west corridor along row 4, and two blocks of shops in
/// between. Every shop column is a chain `doorway - room - doorway` joining the
/// corridor above to the corridor below. Floors are linked by staircases at
/// the north (4, 0), south (4, 8) and atrium (4, 4) positions. The exits sit
/// at both ends of the ground-floor main corridor. Staircase landings release
/// one evacuee every four seconds, so the stairs are where queues build up.
/// Doorway lengths carry a small seeded jitter so shortest paths are unique.
///
/// The fire starts on the first-floor landing of the north staircase.
pub fn reference_building() -> Scenario {
    let mut rng = seeds::rng(REF_LAYOUT_SEED);
    let id = |f: u32, x: u32, y: u32| VertexId(f * REF_COLS * REF_ROWS + y * REF_COLS + x);
    let is_corridor = |x: u32, y: u32| x == 0 || x == REF_COLS - 1 || y == 0 || y == 4 || y == REF_ROWS - 1;
    let is_stair = |x: u32, y: u32| x == 4 && (y == 0 || y == 4 || y == 8);

    let mut vertices = Vec::new();
    for f in 0..REF_FLOORS {
        for y in 0..REF_ROWS {
            for x in 0..REF_COLS {
                let kind = if f == 0 && y == 4 && (x == 0 || x == REF_COLS - 1) {
                    VertexKind::Exit
                } else if is_stair(x, y) {
                    VertexKind::Staircase
                } else if is_corridor(x, y) {
                    VertexKind::Corridor
                } else if y % 4 == 2 {
                    VertexKind::Room
                } else {
                    VertexKind::Doorway
                };
                let landmark = match kind {
                    VertexKind::Doorway | VertexKind::Staircase => true,
                    VertexKind::Corridor => x % 2 == 0 && y % 4 == 0,
                    VertexKind::Room | VertexKind::Exit => false,
                };
                vertices.push(Vertex {
                    id: id(f, x, y),
                    floor: f as i32,
                    kind,
                    departure_rate: if kind == VertexKind::Staircase { REF_STAIR_RATE } else { 1.0 },
                    landmark,
                    pos: Some([x as f64 * REF_SPACING, y as f64 * REF_SPACING]),
                });
            }
        }
    }

    let mut edges = Vec::new();
    let mut link = |a: VertexId, b: VertexId, length: f64, kind: EdgeKind| {
        edges.push(Edge { a, b, length, kind, spread_rate: None });
    };
    for f in 0..REF_FLOORS {
        for y in 0..REF_ROWS {
            for x in 0..REF_COLS {
                // East neighbor: only along corridors.
                if x + 1 < REF_COLS && is_corridor(x, y) && is_corridor(x + 1, y) {
                    link(id(f, x, y), id(f, x + 1, y), REF_SPACING, EdgeKind::Corridor);
                }
                // South neighbor: corridor ring sides or shop columns.
                if y + 1 < REF_ROWS {
                    let both_corridor = is_corridor(x, y) && is_corridor(x, y + 1);
                    if both_corridor && (x == 0 || x == REF_COLS - 1) {
                        link(id(f, x, y), id(f, x, y + 1), REF_SPACING, EdgeKind::Corridor);
                    } else if x > 0 && x < REF_COLS - 1 && !both_corridor {
                        let jitter = rng.gen_range(0..=10u32) as f64 * 0.1;
                        link(id(f, x, y), id(f, x, y + 1), REF_SPACING + jitter, EdgeKind::Doorway);
                    }
                }
            }
        }
        if f + 1 < REF_FLOORS {
            for y in [0, 4, 8] {
                link(id(f, 4, y), id(f + 1, 4, y), REF_STAIR_LENGTH, EdgeKind::Staircase);
            }
        }
    }

    let graph = BuildingGraph::new(vertices, edges).expect("reference building is valid");
    let origin = id(1, 4, 0);
    Scenario::new(graph, origin, BTreeMap::new(), SimParams::default())
        .expect("reference scenario is valid")
}
