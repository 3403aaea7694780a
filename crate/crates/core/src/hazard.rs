//! Stochastic fire model.
//!
//! Ignited vertices grow linearly by `growth_rate` per tick (clamped to 1).
//! Each tick, every edge with exactly one ignited endpoint ignites the other
//! endpoint with that edge's spread probability. The fire owns a dedicated
//! random stream, and the number of draws per tick depends only on the fire
//! state, so a fire replays identically whatever the evacuees do.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::{BuildingGraph, Edge, EdgeKind, VertexId};
use crate::seeds::SimRng;
use crate::{Error, Result, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpreadRates {
    pub corridor: f64,
    pub doorway: f64,
    pub staircase: f64,
}

impl Default for SpreadRates {
    fn default() -> Self {
        SpreadRates { corridor: 0.01, doorway: 0.02, staircase: 0.005 }
    }
}

impl SpreadRates {
    pub fn for_kind(&self, kind: EdgeKind) -> f64 {
        match kind {
            EdgeKind::Corridor => self.corridor,
            EdgeKind::Doorway => self.doorway,
            EdgeKind::Staircase => self.staircase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FireParams {
    pub spread_rate_by_kind: SpreadRates,
    /// Intensity added per tick to every ignited vertex.
    pub growth_rate: f64,
    /// Intensity at or above which a vertex or edge kills.
    pub lethal_threshold: f64,
}

impl Default for FireParams {
    fn default() -> Self {
        FireParams {
            spread_rate_by_kind: SpreadRates::default(),
            growth_rate: 0.05,
            lethal_threshold: 0.7,
        }
    }
}

impl FireParams {
    pub fn validate(&self) -> Result<()> {
        let r = &self.spread_rate_by_kind;
        for p in [r.corridor, r.doorway, r.staircase] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("spread rate {p} outside [0, 1]")));
            }
        }
        if !(self.growth_rate > 0.0 && self.growth_rate.is_finite()) {
            return Err(Error::Config(format!(
                "growth rate must be positive, got {}",
                self.growth_rate
            )));
        }
        if !(self.lethal_threshold > 0.0 && self.lethal_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "lethal threshold {} outside (0, 1]",
                self.lethal_threshold
            )));
        }
        Ok(())
    }

    pub fn spread_rate(&self, edge: &Edge) -> f64 {
        edge.spread_rate
            .unwrap_or_else(|| self.spread_rate_by_kind.for_kind(edge.kind))
    }
}

/// Per-vertex fire intensity at the current tick.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardField {
    intensity: Vec<f64>,
    ignition: Vec<Option<Tick>>,
}

impl HazardField {
    pub fn new(n: usize) -> Self {
        HazardField { intensity: vec![0.0; n], ignition: vec![None; n] }
    }

    pub fn from_intensities(intensity: Vec<f64>) -> Self {
        let ignition = intensity.iter().map(|&i| (i > 0.0).then_some(0)).collect();
        HazardField { intensity, ignition }
    }

    pub fn intensity(&self, v: VertexId) -> f64 {
        self.intensity[v.index()]
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensity
    }

    pub fn ignition_time(&self, v: VertexId) -> Option<Tick> {
        self.ignition[v.index()]
    }

    pub fn is_ignited(&self, v: VertexId) -> bool {
        self.ignition[v.index()].is_some()
    }

    pub fn burning(&self) -> usize {
        self.ignition.iter().filter(|i| i.is_some()).count()
    }

    /// Marks `v` ignited at `t` with intensity `growth_rate`, clamped to 1.
    /// A vertex that already burns is left untouched.
    pub fn ignite(&mut self, v: VertexId, t: Tick, growth_rate: f64) {
        if self.ignition[v.index()].is_none() {
            self.ignition[v.index()] = Some(t);
            self.intensity[v.index()] = growth_rate.min(1.0);
        }
    }

    /// Advances the fire to tick `t`. Returns the number of random draws made.
    pub fn step(&mut self, graph: &BuildingGraph, params: &FireParams, rng: &mut SimRng, t: Tick) -> usize {
        let was_ignited: Vec<bool> = self.ignition.iter().map(Option::is_some).collect();
        for (v, ign) in self.ignition.iter().enumerate() {
            if let Some(t0) = *ign {
                // Computed from the ignition tick rather than accumulated so
                // the threshold crossing is exact.
                let age = (t - t0 + 1) as f64;
                self.intensity[v] = (params.growth_rate * age).min(1.0);
            }
        }
        let mut draws = 0;
        for e in graph.edges() {
            let (ia, ib) = (was_ignited[e.a.index()], was_ignited[e.b.index()]);
            if ia == ib {
                continue;
            }
            let target = if ia { e.b } else { e.a };
            draws += 1;
            if rng.gen::<f64>() < params.spread_rate(e) {
                self.ignite(target, t, params.growth_rate);
            }
        }
        draws
    }

    /// Mean of the endpoint intensities.
    pub fn edge_intensity(&self, e: &Edge) -> f64 {
        edge_intensity(self.intensity(e.a), self.intensity(e.b))
    }

    pub fn is_lethal(&self, params: &FireParams, v: VertexId) -> bool {
        self.intensity(v) >= params.lethal_threshold
    }
}

pub fn edge_intensity(a: f64, b: f64) -> f64 {
    (a + b) / 2.0
}

/// One row of the exportable hazard trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardTraceRow {
    pub vertex: VertexId,
    pub ignition_tick: Tick,
    pub intensity: Vec<f64>,
}

/// Ignition tick and intensity series for every vertex that caught fire,
/// given per-tick intensity rows.
pub fn hazard_trace(rows: &[Vec<f64>]) -> Vec<HazardTraceRow> {
    let Some(n) = rows.first().map(Vec::len) else {
        return Vec::new();
    };
    (0..n)
        .filter_map(|v| {
            let first = rows.iter().position(|r| r[v] > 0.0)?;
            Some(HazardTraceRow {
                vertex: VertexId(v as u32),
                ignition_tick: first as Tick,
                intensity: rows.iter().map(|r| r[v]).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Vertex, VertexKind};
    use crate::seeds;

    fn star(leaves: u32, rate: f64) -> BuildingGraph {
        let mut vs = vec![Vertex {
            id: VertexId(0),
            floor: 0,
            kind: VertexKind::Room,
            departure_rate: 1.0,
            landmark: false,
            pos: None,
        }];
        let mut es = Vec::new();
        for i in 1..=leaves {
            vs.push(Vertex {
                id: VertexId(i),
                floor: 0,
                kind: if i == 1 { VertexKind::Exit } else { VertexKind::Room },
                departure_rate: 1.0,
                landmark: false,
                pos: None,
            });
            es.push(Edge {
                a: VertexId(0),
                b: VertexId(i),
                length: 5.0,
                kind: EdgeKind::Doorway,
                spread_rate: Some(rate),
            });
        }
        BuildingGraph::new(vs, es).unwrap()
    }

    #[test]
    fn ignite_sets_growth_and_is_idempotent() {
        let mut f = HazardField::new(3);
        f.ignite(VertexId(1), 4, 0.1);
        assert_eq!(f.intensity(VertexId(1)), 0.1);
        assert_eq!(f.ignition_time(VertexId(1)), Some(4));
        let once = f.clone();
        f.ignite(VertexId(1), 4, 0.1);
        assert_eq!(f, once);
        f.ignite(VertexId(1), 9, 0.3);
        assert_eq!(f, once);
    }

    #[test]
    fn ignite_clamps() {
        let mut f = HazardField::new(1);
        f.ignite(VertexId(0), 0, 1.5);
        assert_eq!(f.intensity(VertexId(0)), 1.0);
    }

    #[test]
    fn cold_field_stays_cold() {
        let g = star(4, 1.0);
        let mut f = HazardField::new(g.len());
        let mut rng = seeds::rng(1);
        let before = f.clone();
        assert_eq!(f.step(&g, &FireParams::default(), &mut rng, 1), 0);
        assert_eq!(f, before);
    }

    #[test]
    fn certain_spread_reaches_all_neighbors() {
        let g = star(4, 1.0);
        let mut f = HazardField::new(g.len());
        f.ignite(VertexId(0), 0, 0.05);
        f.step(&g, &FireParams::default(), &mut seeds::rng(3), 1);
        for i in 1..=4 {
            assert!(f.is_ignited(VertexId(i)));
            assert_eq!(f.ignition_time(VertexId(i)), Some(1));
        }
        assert!((f.intensity(VertexId(0)) - 0.10).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_spread_frequency() {
        let g = star(4, 0.5);
        let params = FireParams::default();
        let mut rng = seeds::rng(0xF12E);
        let trials = 10_000;
        let mut hits = [0u32; 4];
        for _ in 0..trials {
            let mut f = HazardField::new(g.len());
            f.ignite(VertexId(0), 0, params.growth_rate);
            f.step(&g, &params, &mut rng, 1);
            for (i, h) in hits.iter_mut().enumerate() {
                if f.is_ignited(VertexId(i as u32 + 1)) {
                    *h += 1;
                }
            }
        }
        for h in hits {
            let freq = h as f64 / trials as f64;
            assert!((freq - 0.5).abs() <= 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn edge_intensity_is_mean() {
        assert!((edge_intensity(0.4, 0.8) - 0.6).abs() < 1e-15);
        assert_eq!(edge_intensity(0.0, 0.0), 0.0);
        assert_eq!(edge_intensity(1.0, 0.0), 0.5);
    }

    #[test]
    fn lethal_boundary_is_inclusive() {
        let params = FireParams { lethal_threshold: 0.7, ..FireParams::default() };
        let f = HazardField::from_intensities(vec![0.0, 0.7, 0.69]);
        assert!(!f.is_lethal(&params, VertexId(0)));
        assert!(f.is_lethal(&params, VertexId(1)));
        assert!(!f.is_lethal(&params, VertexId(2)));
    }

    #[test]
    fn default_fire_turns_lethal_after_fourteen_ticks() {
        let g = star(2, 0.0);
        let params = FireParams::default();
        let mut f = HazardField::new(g.len());
        let mut rng = seeds::rng(0);
        f.ignite(VertexId(0), 0, params.growth_rate);
        let mut t = 0;
        while !f.is_lethal(&params, VertexId(0)) {
            t += 1;
            f.step(&g, &params, &mut rng, t);
        }
        assert_eq!(t, 13);
    }

    #[test]
    fn trace_lists_ignited_vertices() {
        let rows = vec![vec![0.1, 0.0], vec![0.2, 0.0], vec![0.3, 0.1]];
        let tr = hazard_trace(&rows);
        assert_eq!(tr.len(), 2);
        assert_eq!(tr[1].vertex, VertexId(1));
        assert_eq!(tr[1].ignition_tick, 2);
    }
}
