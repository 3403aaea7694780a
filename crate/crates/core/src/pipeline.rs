//! Planning, repair and execution of the simulate-then-repair pipeline, plus
//! the experiment grid that compares it with the two live policies.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::analytics::{count_exchanges, estimate_elapsed, survivor_rate, Counters};
use crate::cpn::CpnstPolicy;
use crate::engine::{run_simulation_with, Fate, RoutingPolicy, RunOptions, SimOutcome, SourceRoutedPolicy};
use crate::hazard::HazardField;
use crate::report::ReportRow;
use crate::routing::{dsp_route, reassign_perished, DspPolicy, ReassignOptions, Reassignment};
use crate::scenario::{generate_occupancy, Scenario, VertexId};
use crate::seeds::{self, Stream};
use crate::{EvacueeId, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "dsp")]
    Dsp,
    #[serde(rename = "cpnst")]
    Cpnst,
    #[serde(rename = "cpnst-td")]
    CpnstTd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Dsp, Algorithm::Cpnst, Algorithm::CpnstTd];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Dsp => "dsp",
            Algorithm::Cpnst => "cpnst",
            Algorithm::CpnstTd => "cpnst-td",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?} (expected dsp, cpnst or cpnst-td)")))
    }
}

/// Fire used when a plan is executed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FireReplay {
    /// The executed fire is the one the planner simulated.
    #[default]
    Shared,
    /// The executed fire is drawn from its own seed.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteSource {
    /// Path the evacuee took while surviving the planning run.
    Realized,
    /// Time-dependent route found for a planning casualty.
    Reassigned,
    /// No safe route exists; the evacuee gets the static shortest path.
    Unsavable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommittedRoute {
    pub route: Vec<VertexId>,
    pub source: RouteSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutePlan {
    pub routes: BTreeMap<EvacueeId, CommittedRoute>,
    pub fire_seed: u64,
    pub behavior_seed: u64,
    pub algorithm: Algorithm,
    /// Work of the planning run and of the reassignment.
    #[serde(skip)]
    pub planning_counters: Counters,
    #[serde(skip)]
    pub reassign_counters: Counters,
}

impl RoutePlan {
    pub fn count(&self, source: RouteSource) -> usize {
        self.routes.values().filter(|r| r.source == source).count()
    }

    pub fn source_routes(&self) -> BTreeMap<EvacueeId, Vec<VertexId>> {
        self.routes.iter().map(|(&id, r)| (id, r.route.clone())).collect()
    }

    pub fn total_counters(&self) -> Counters {
        let mut c = self.planning_counters.clone();
        c.merge(&self.reassign_counters);
        c
    }
}

/// Runs the live policy for `algorithm` (DSP or CPNST) once.
pub fn run_live(scenario: &Scenario, algorithm: Algorithm, opts: &RunOptions) -> SimOutcome {
    let mut policy: Box<dyn RoutingPolicy> = match algorithm {
        Algorithm::Dsp => Box::new(DspPolicy::new()),
        Algorithm::Cpnst | Algorithm::CpnstTd => Box::new(CpnstPolicy::new()),
    };
    run_simulation_with(scenario, policy.as_mut(), opts)
}

/// Planning run with CPNST followed by reassignment of every casualty.
pub fn plan_routes(
    scenario: &Scenario,
    fire_seed: u64,
    behavior_seed: u64,
    reassign: ReassignOptions,
) -> (RoutePlan, SimOutcome) {
    let outcome = run_live(scenario, Algorithm::Cpnst, &RunOptions::new(fire_seed, behavior_seed));
    let repaired = reassign_perished(&outcome, scenario, reassign);

    let mut start_field = HazardField::new(scenario.graph.len());
    start_field.ignite(scenario.hazard_origin, 0, scenario.params.fire.growth_rate);

    let mut routes = BTreeMap::new();
    for r in &outcome.records {
        let committed = match (r.fate, repaired.routes.get(&r.id)) {
            (Fate::Escaped, _) => CommittedRoute { route: r.vertices(), source: RouteSource::Realized },
            (Fate::Perished, Some(Reassignment::Route(p))) => {
                CommittedRoute { route: p.vertices(), source: RouteSource::Reassigned }
            }
            (Fate::Perished, _) => {
                let route = dsp_route(&scenario.graph, &start_field, r.initial, scenario.params.hazard_penalty)
                    .unwrap_or_else(|| vec![r.initial]);
                CommittedRoute { route, source: RouteSource::Unsavable }
            }
        };
        routes.insert(r.id, committed);
    }
    let plan = RoutePlan {
        routes,
        fire_seed,
        behavior_seed,
        algorithm: Algorithm::CpnstTd,
        planning_counters: outcome.counters.clone(),
        reassign_counters: repaired.counters,
    };
    (plan, outcome)
}

/// Open-loop execution: every evacuee follows its committed route.
pub fn execute_plan(scenario: &Scenario, plan: &RoutePlan, opts: &RunOptions) -> SimOutcome {
    let mut policy = SourceRoutedPolicy::new(plan.source_routes());
    run_simulation_with(scenario, &mut policy, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub occupancies: Vec<u32>,
    pub runs: u32,
    pub seed_base: u64,
    pub algorithms: Vec<Algorithm>,
    pub fire_replay: FireReplay,
    pub static_timeline: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            occupancies: vec![30, 60, 90, 120],
            runs: 5,
            seed_base: 0,
            algorithms: Algorithm::ALL.to_vec(),
            fire_replay: FireReplay::Shared,
            static_timeline: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.occupancies.is_empty() {
            return Err(Error::Config("occupancy list is empty".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithm list is empty".into()));
        }
        Ok(())
    }

    /// Every (algorithm, occupancy, run) cell in report order.
    pub fn cells(&self) -> Vec<(Algorithm, u32, u32)> {
        let mut algs = self.algorithms.clone();
        algs.sort();
        algs.dedup();
        let mut occs = self.occupancies.clone();
        occs.sort();
        occs.dedup();
        let mut out = Vec::new();
        for &a in &algs {
            for &o in &occs {
                for r in 0..self.runs {
                    out.push((a, o, r));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellOptions {
    pub fire_replay: FireReplay,
    pub static_timeline: bool,
    pub record_events: bool,
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub row: ReportRow,
    /// The outcome the row describes; the execution run for CPNST&TD.
    pub outcome: SimOutcome,
    pub plan: Option<RoutePlan>,
    pub planning: Option<SimOutcome>,
}

/// Copy of `template` with `n` evacuees placed from the cell's occupancy
/// stream, or the template itself when `n` is `None`.
pub fn populate(template: &Scenario, n: Option<u32>, cell: u64) -> Result<Scenario> {
    match n {
        None => Ok(template.clone()),
        Some(n) => {
            let occ = generate_occupancy(&template.graph, n, seeds::stream(cell, Stream::Occupancy));
            template.with_occupancy(occ)
        }
    }
}

/// One experiment cell. All algorithms given the same cell seed see the same
/// occupancy and, under shared replay, the same fire.
pub fn run_cell(scenario: &Scenario, algorithm: Algorithm, cell: u64, opts: CellOptions) -> CellRun {
    let fire = seeds::stream(cell, Stream::Fire);
    let behavior = seeds::stream(cell, Stream::Behavior);
    let model = &scenario.params.cycle;
    let n = scenario.occupancy.len() as u32;
    let with_events = |o: RunOptions| if opts.record_events { o.with_events() } else { o };

    let (outcome, plan, planning, planning_elapsed, exchanges) = match algorithm {
        Algorithm::Dsp | Algorithm::Cpnst => {
            let outcome = run_live(scenario, algorithm, &with_events(RunOptions::new(fire, behavior)));
            let elapsed = estimate_elapsed(&outcome.counters, model);
            let ex = count_exchanges(&outcome, &scenario.graph, algorithm);
            (outcome, None, None, elapsed, ex)
        }
        Algorithm::CpnstTd => {
            let reassign = ReassignOptions { static_timeline: opts.static_timeline, start_tick: 0 };
            let (plan, planning) = plan_routes(scenario, fire, behavior, reassign);
            let exec_fire = match opts.fire_replay {
                FireReplay::Shared => fire,
                FireReplay::Independent => seeds::stream(cell, Stream::ExecFire),
            };
            let exec_behavior = seeds::stream(cell, Stream::ExecBehavior);
            let outcome = execute_plan(scenario, &plan, &with_events(RunOptions::new(exec_fire, exec_behavior)));
            let elapsed = estimate_elapsed(&plan.total_counters(), model);
            let ex = count_exchanges(&outcome, &scenario.graph, algorithm);
            (outcome, Some(plan), Some(planning), elapsed, ex)
        }
    };
    let row = ReportRow {
        algorithm,
        occupancy: n,
        seed: cell,
        survivor_pct: survivor_rate(&outcome),
        exchanges,
        duration_s: outcome.total_duration as f64 * scenario.params.tick_seconds,
        planning_elapsed_s: planning_elapsed,
        truncated: outcome.truncated,
    };
    CellRun { row, outcome, plan, planning }
}

/// Runs the whole grid on `workers` threads. `on_row` sees the rows in report
/// order (algorithm, occupancy, run), each as soon as every row before it is
/// done, whatever order the workers finish in.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    template: &Scenario,
    workers: usize,
    mut on_row: impl FnMut(&ReportRow) -> Result<()>,
) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let cells = config.cells();
    let opts = CellOptions {
        fire_replay: config.fire_replay,
        static_timeline: config.static_timeline,
        record_events: false,
    };
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<ReportRow>)>();
    let mut rows: Vec<Option<ReportRow>> = vec![None; cells.len()];
    let mut emitted = 0;
    let mut failure: Option<Error> = None;

    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(cells.len().max(1)) {
            let tx = tx.clone();
            let (next, cells) = (&next, &cells);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(alg, occ, run)) = cells.get(i) else {
                    break;
                };
                let cell = seeds::cell_seed(config.seed_base, occ, run);
                let row = populate(template, Some(occ), cell).map(|sc| run_cell(&sc, alg, cell, opts).row);
                if tx.send((i, row)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, row) in rx {
            match row {
                Ok(r) => rows[i] = Some(r),
                Err(e) => {
                    failure.get_or_insert(e);
                    next.store(cells.len(), Ordering::Relaxed);
                }
            }
            while failure.is_none() && emitted < rows.len() {
                let Some(r) = &rows[emitted] else { break };
                if let Err(e) = on_row(r) {
                    failure = Some(e);
                    next.store(cells.len(), Ordering::Relaxed);
                    break;
                }
                emitted += 1;
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(rows.into_iter().map(|r| r.expect("every cell finished")).collect())
}

pub fn run_experiment(config: &ExperimentConfig, template: &Scenario, workers: usize) -> Result<Vec<ReportRow>> {
    run_experiment_with(config, template, workers, |_| Ok(()))
}
