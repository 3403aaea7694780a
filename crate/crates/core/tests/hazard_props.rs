mod common;

use proptest::prelude::*;

use evacsim::hazard::HazardField;
use evacsim::oracle::random_scenario;
use evacsim::scenario::VertexId;
use evacsim::seeds;

fn burn(seed: u64, ticks: u32) -> (evacsim::scenario::Scenario, Vec<Vec<f64>>) {
    let s = random_scenario(&mut seeds::rng(seed));
    let mut field = HazardField::new(s.graph.len());
    field.ignite(s.hazard_origin, 0, s.params.fire.growth_rate);
    let mut rng = seeds::rng(seeds::derive(seed, 1));
    let mut rows = vec![field.intensities().to_vec()];
    for t in 1..=ticks {
        field.step(&s.graph, &s.params.fire, &mut rng, t);
        rows.push(field.intensities().to_vec());
    }
    (s, rows)
}

proptest! {
    #![proptest_config(common::cases(128, 0xF12E))]

    #[test]
    fn intensity_never_decreases(seed in any::<u64>()) {
        let (_, rows) = burn(seed, 40);
        for w in rows.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                prop_assert!(b >= a);
                prop_assert!((0.0..=1.0).contains(b));
            }
        }
    }

    #[test]
    fn fire_spreads_only_from_burning_neighbors(seed in any::<u64>()) {
        let (s, rows) = burn(seed, 40);
        let g = &s.graph;
        for t in 1..rows.len() {
            for v in 0..g.len() {
                if rows[t][v] > 0.0 && rows[t - 1][v] == 0.0 {
                    let lit = g.neighbors(VertexId(v as u32)).iter().any(|l| rows[t - 1][l.to.index()] > 0.0);
                    prop_assert!(lit, "vertex {} ignited at {} with no burning neighbor", v, t);
                }
            }
        }
        let origin = s.hazard_origin.index();
        prop_assert!(rows[0].iter().enumerate().all(|(v, &i)| (i > 0.0) == (v == origin)));
    }

    #[test]
    fn same_stream_same_fire(seed in any::<u64>()) {
        prop_assert_eq!(burn(seed, 30).1, burn(seed, 30).1);
    }
}
