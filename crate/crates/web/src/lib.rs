//! Browser bindings for the evacuation simulator.
//!
//! Every export takes plain numbers and strings and returns a JSON document,
//! so the page needs no glue beyond `JSON.parse`. The same functions are
//! callable natively, which is how they are tested.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use evacsim::engine::Fate;
use evacsim::hazard::HazardField;
use evacsim::pipeline::{populate, run_cell, Algorithm, CellOptions};
use evacsim::report::ReportRow;
use evacsim::scenario::{reference_building, Scenario, VertexKind};
use evacsim::seeds::{self, Stream};
use evacsim::{Tick, VertexId};

/// Longest fire preview the page may request.
const MAX_PREVIEW_TICKS: Tick = 3600;

#[derive(Serialize)]
struct LayoutVertex {
    id: u32,
    floor: i32,
    kind: VertexKind,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct Layout {
    vertices: Vec<LayoutVertex>,
    edges: Vec<[u32; 2]>,
    hazard_origin: u32,
}

/// One evacuee's trajectory as `[vertex, arrive, depart]` triples; the last
/// departure is `null`.
#[derive(Serialize)]
struct Track {
    id: u32,
    fate: Fate,
    terminal_tick: Tick,
    steps: Vec<(u32, Tick, Option<Tick>)>,
}

#[derive(Serialize)]
struct Playback {
    row: ReportRow,
    /// Hazard intensity per vertex at the end of every tick.
    hazard: Vec<Vec<f64>>,
    tracks: Vec<Track>,
}

#[derive(Serialize)]
struct FirePreview {
    /// Tick each vertex caught fire, `null` if it never did.
    ignition: Vec<Option<Tick>>,
    burning: Vec<usize>,
}

fn scenario_with_origin(origin: u32) -> Result<Scenario, String> {
    let mut scenario = reference_building();
    let v = VertexId(origin);
    if !scenario.graph.contains(v) || scenario.graph.is_exit(v) {
        return Err(format!("vertex {origin} cannot be the hazard origin"));
    }
    scenario.hazard_origin = v;
    Ok(scenario)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Layout of the bundled reference building.
pub fn layout_json() -> String {
    let scenario = reference_building();
    let graph = &scenario.graph;
    let layout = Layout {
        vertices: graph
            .vertices()
            .iter()
            .map(|v| {
                let [x, y] = v.pos.unwrap_or_default();
                LayoutVertex { id: v.id.0, floor: v.floor, kind: v.kind, x, y }
            })
            .collect(),
        edges: graph.edges().iter().map(|e| [e.a.0, e.b.0]).collect(),
        hazard_origin: scenario.hazard_origin.0,
    };
    to_json(&layout).expect("layout serializes")
}

/// Runs one cell and returns its report row, hazard history and trajectories.
pub fn simulate_json(algorithm: &str, evacuees: u32, seed: u32, origin: u32) -> Result<String, String> {
    let algorithm: Algorithm = algorithm.parse().map_err(|e: evacsim::Error| e.to_string())?;
    let template = scenario_with_origin(origin)?;
    let cell = seed as u64;
    let scenario = populate(&template, Some(evacuees), cell).map_err(|e| e.to_string())?;
    let run = run_cell(&scenario, algorithm, cell, CellOptions::default());
    let tracks = run
        .outcome
        .records
        .iter()
        .map(|r| Track {
            id: r.id,
            fate: r.fate,
            terminal_tick: r.terminal_tick,
            steps: r.realized_path.iter().map(|s| (s.vertex.0, s.arrive, s.depart)).collect(),
        })
        .collect();
    to_json(&Playback { row: run.row, hazard: run.outcome.timeline.hazard, tracks })
}

/// Runs the three algorithms on the same cell and returns their report rows.
pub fn compare_json(evacuees: u32, seed: u32, origin: u32) -> Result<String, String> {
    let template = scenario_with_origin(origin)?;
    let cell = seed as u64;
    let scenario = populate(&template, Some(evacuees), cell).map_err(|e| e.to_string())?;
    let rows: Vec<ReportRow> = Algorithm::ALL
        .iter()
        .map(|&a| run_cell(&scenario, a, cell, CellOptions::default()).row)
        .collect();
    to_json(&rows)
}

/// Spreads the fire alone for `ticks` ticks with the cell's fire stream; the
/// result matches the fire every algorithm sees in that cell.
pub fn fire_preview_json(seed: u32, origin: u32, ticks: Tick) -> Result<String, String> {
    if ticks > MAX_PREVIEW_TICKS {
        return Err(format!("at most {MAX_PREVIEW_TICKS} ticks"));
    }
    let scenario = scenario_with_origin(origin)?;
    let graph = &scenario.graph;
    let fire = &scenario.params.fire;
    let mut rng = seeds::rng(seeds::stream(seed as u64, Stream::Fire));
    let mut field = HazardField::new(graph.len());
    field.ignite(scenario.hazard_origin, 0, fire.growth_rate);
    let mut burning = vec![field.burning()];
    for t in 1..=ticks {
        field.step(graph, fire, &mut rng, t);
        burning.push(field.burning());
    }
    let ignition = (0..graph.len() as u32).map(|v| field.ignition_time(VertexId(v))).collect();
    to_json(&FirePreview { ignition, burning })
}

#[wasm_bindgen]
pub fn layout() -> String {
    layout_json()
}

#[wasm_bindgen]
pub fn simulate(algorithm: &str, evacuees: u32, seed: u32, origin: u32) -> Result<String, JsError> {
    simulate_json(algorithm, evacuees, seed, origin).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare(evacuees: u32, seed: u32, origin: u32) -> Result<String, JsError> {
    compare_json(evacuees, seed, origin).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fire_preview(seed: u32, origin: u32, ticks: u32) -> Result<String, JsError> {
    fire_preview_json(seed, origin, ticks).map_err(|e| JsError::new(&e))
}
