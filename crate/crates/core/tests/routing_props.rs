mod common;

use proptest::prelude::*;
use rand::Rng;

use evacsim::analytics::Counters;
use evacsim::engine::Fate;
use evacsim::oracle::{random_instance, random_scenario};
use evacsim::pipeline::{run_live, Algorithm};
use evacsim::routing::{reassign_perished, td_dijkstra, OccupancyTimeline, ReassignOptions, Reassignment, TdParams};
use evacsim::scenario::{BuildingGraph, VertexId};
use evacsim::engine::RunOptions;
use evacsim::seeds;

/// Bellman-Ford over hop costs of one tick of queueing plus the walk.
fn static_hops(g: &BuildingGraph, from: VertexId, speed: f64) -> Option<u32> {
    let mut best = vec![u32::MAX; g.len()];
    best[from.index()] = 0;
    for _ in 0..g.len() {
        for e in g.edges() {
            let walk = ((e.length / speed - 1e-9).ceil() as u32).max(1);
            for (a, b) in [(e.a, e.b), (e.b, e.a)] {
                let (ta, tb) = (best[a.index()], best[b.index()]);
                if ta != u32::MAX && !g.is_exit(a) && ta + 1 + walk < tb {
                    best[b.index()] = ta + 1 + walk;
                }
            }
        }
    }
    g.exits().map(|x| best[x.index()]).filter(|&t| t != u32::MAX).min()
}

proptest! {
    #![proptest_config(common::cases(200, 0x70D))]

    #[test]
    fn empty_timeline_reduces_to_static_shortest_path(seed in any::<u64>()) {
        let s = random_scenario(&mut seeds::rng(seed));
        let g = &s.graph;
        let params = TdParams::from_sim(&s.params);
        let tl = OccupancyTimeline::empty(g.len());
        let mut rng = seeds::rng(seed ^ 1);
        let from = VertexId(rng.gen_range(0..g.len() as u32));
        let t0 = rng.gen_range(0..20);
        let path = td_dijkstra(g, &tl, from, t0, &params, &mut Counters::default()).expect("cold building has a route");
        prop_assert_eq!(Some(path.exit_arrival() - t0), static_hops(g, from, s.params.walking_speed));
    }

    #[test]
    fn search_agrees_with_exhaustive_oracle(seed in any::<u64>()) {
        let inst = random_instance(&mut seeds::rng(seed));
        let found = td_dijkstra(&inst.graph, &inst.timeline(), inst.from, inst.t0, &inst.params, &mut Counters::default());
        let expected = inst.earliest_exit_arrival();
        prop_assert_eq!(found.as_ref().map(|p| p.exit_arrival()), expected);
        if let Some(p) = found {
            prop_assert_eq!(inst.replay(&p), Ok(p.exit_arrival()));
        }
    }
}

proptest! {
    #![proptest_config(common::cases(128, 0x70E))]

    #[test]
    fn reassigned_routes_avoid_recorded_lethal_intervals(seed in any::<u64>(), static_timeline in any::<bool>()) {
        let s = random_scenario(&mut seeds::rng(seed));
        let outcome = run_live(&s, Algorithm::Cpnst, &RunOptions::new(seed, seed ^ 2));
        let opts = ReassignOptions { static_timeline, start_tick: 0 };
        let first = reassign_perished(&outcome, &s, opts);
        prop_assert_eq!(&first, &reassign_perished(&outcome, &s, opts));

        let perished = outcome.records.iter().filter(|r| r.fate == Fate::Perished).count();
        prop_assert_eq!(first.routes.len(), perished);

        let hz = &outcome.timeline.hazard;
        let at = |v: VertexId, t: u32| hz[(t as usize).min(hz.len() - 1)][v.index()];
        let lethal = s.params.fire.lethal_threshold;
        for r in first.routes.values() {
            let Reassignment::Route(p) = r else { continue };
            prop_assert!(s.graph.is_exit(p.steps.last().unwrap().vertex));
            for w in p.steps.windows(2) {
                let depart = w[0].depart.expect("inner steps depart");
                prop_assert!(w[0].arrive < depart && depart < w[1].arrive);
                prop_assert!(s.graph.edge_between(w[0].vertex, w[1].vertex).is_some());
                for t in w[0].arrive + 1..=depart {
                    prop_assert!(at(w[0].vertex, t) < lethal, "queued at {} in fire at tick {}", w[0].vertex, t);
                }
            }
        }
    }
}
