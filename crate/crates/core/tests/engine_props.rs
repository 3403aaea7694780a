mod common;

use std::collections::{BTreeMap, VecDeque};

use proptest::prelude::*;

use evacsim::engine::{EventKind, Fate, SimOutcome};
use evacsim::oracle::random_scenario;
use evacsim::pipeline::{run_cell, Algorithm, CellOptions};
use evacsim::scenario::Scenario;
use evacsim::seeds;

fn run(seed: u64, algorithm: Algorithm) -> (Scenario, SimOutcome) {
    let s = random_scenario(&mut seeds::rng(seed));
    let opts = CellOptions { record_events: true, ..CellOptions::default() };
    let outcome = run_cell(&s, algorithm, seed, opts).outcome;
    (s, outcome)
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Queued(usize),
    Walking,
    Done,
}

/// Replays the event log tick by tick and checks it against the outcome.
fn replay(s: &Scenario, out: &SimOutcome) -> Result<(), TestCaseError> {
    let n = s.occupancy.len();
    let mut state: BTreeMap<u32, State> = BTreeMap::new();
    let mut queues: Vec<VecDeque<u32>> = vec![VecDeque::new(); s.graph.len()];
    let mut last_departure: Vec<Option<u32>> = vec![None; s.graph.len()];
    let mut departed_now: Vec<u32> = vec![0; s.graph.len()];
    let mut events = out.events.iter().peekable();
    for t in 0..=out.total_duration {
        departed_now.iter_mut().for_each(|c| *c = 0);
        while let Some(e) = events.next_if(|e| e.tick == t) {
            let v = e.vertex.index();
            let leave = |queues: &mut Vec<VecDeque<u32>>, st: Option<&State>| {
                if let Some(State::Queued(at)) = st {
                    queues[*at].retain(|&a| a != e.evacuee);
                }
            };
            match e.kind {
                EventKind::Placed | EventKind::Arrive => {
                    queues[v].push_back(e.evacuee);
                    state.insert(e.evacuee, State::Queued(v));
                }
                EventKind::Hold => {
                    leave(&mut queues, state.get(&e.evacuee));
                    queues[v].push_back(e.evacuee);
                    state.insert(e.evacuee, State::Queued(v));
                }
                EventKind::Depart => {
                    prop_assert_eq!(queues[v].pop_front(), Some(e.evacuee), "FIFO violated at {} tick {}", v, t);
                    departed_now[v] += 1;
                    let d = s.graph.vertex(e.vertex).departure_rate * s.params.tick_seconds;
                    prop_assert!(departed_now[v] as f64 <= d.max(1.0) + 1e-9, "too many departures at {}", v);
                    if d < 1.0 {
                        if let Some(prev) = last_departure[v] {
                            prop_assert!((t - prev) as f64 >= 1.0 / d - 1e-9, "departures at {} too close", v);
                        }
                    }
                    last_departure[v] = Some(t);
                    state.insert(e.evacuee, State::Walking);
                }
                EventKind::Escape | EventKind::Perish => {
                    leave(&mut queues, state.get(&e.evacuee));
                    state.insert(e.evacuee, State::Done);
                }
            }
        }
        prop_assert_eq!(state.len(), n, "every evacuee is accounted for at tick {}", t);
        let counts: Vec<u32> = queues.iter().map(|q| q.len() as u32).collect();
        prop_assert_eq!(&counts, &out.timeline.queue_counts[t as usize], "timeline row {}", t);
    }
    prop_assert!(events.next().is_none());
    prop_assert!(state.values().all(|&s| s == State::Done), "evacuees still active at the end");
    Ok(())
}

fn check_paths(s: &Scenario, out: &SimOutcome) -> Result<(), TestCaseError> {
    let lethal = s.params.fire.lethal_threshold;
    let last = out.timeline.hazard.len() - 1;
    prop_assert_eq!(out.escaped() + out.perished(), s.occupancy.len());
    for r in &out.records {
        prop_assert_eq!(r.realized_path[0].vertex, r.initial);
        for w in r.realized_path.windows(2) {
            prop_assert!(s.graph.edge_between(w[0].vertex, w[1].vertex).is_some(), "path of {} is not a walk", r.id);
            prop_assert!(w[0].depart.is_some_and(|d| d >= w[0].arrive && d < w[1].arrive));
        }
        if r.fate == Fate::Escaped {
            prop_assert!(s.graph.is_exit(r.realized_path.last().unwrap().vertex));
            for step in &r.realized_path {
                if s.graph.is_exit(step.vertex) {
                    continue;
                }
                for t in step.arrive..=step.depart.unwrap() {
                    let i = out.timeline.hazard[(t as usize).min(last)][step.vertex.index()];
                    prop_assert!(i < lethal, "survivor {} stood at lethal {} at tick {}", r.id, step.vertex, t);
                }
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(common::cases(128, 0xE7E7))]

    #[test]
    fn dsp_runs_are_consistent(seed in any::<u64>()) {
        let (s, out) = run(seed, Algorithm::Dsp);
        replay(&s, &out)?;
        check_paths(&s, &out)?;
    }

    #[test]
    fn cpnst_runs_are_consistent(seed in any::<u64>()) {
        let (s, out) = run(seed, Algorithm::Cpnst);
        replay(&s, &out)?;
        check_paths(&s, &out)?;
    }

    #[test]
    fn source_routed_runs_are_consistent(seed in any::<u64>()) {
        let (s, out) = run(seed, Algorithm::CpnstTd);
        replay(&s, &out)?;
        check_paths(&s, &out)?;
    }
}
