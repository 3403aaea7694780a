mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;

use evacsim::analytics::Counters;
use evacsim::cpn::{
    cpn_tick, handle_ack, rnn_steady_state, Ack, CpnNetwork, CpnNodeState, CpnParams, NeuronWeights, Observation,
    Reinforcement,
};
use evacsim::hazard::HazardField;
use evacsim::oracle::random_scenario;
use evacsim::scenario::VertexId;
use evacsim::seeds;

fn weights() -> impl Strategy<Value = Vec<NeuronWeights>> {
    prop::collection::vec((0.0f64..50.0, 0.0f64..50.0), 1..8).prop_map(|ws| {
        ws.into_iter().map(|(excite, inhibit)| NeuronWeights { excite: excite + 1e-6, inhibit }).collect()
    })
}

fn reinforcement() -> impl Strategy<Value = Reinforcement> {
    prop_oneof![Just(Reinforcement::Reward), Just(Reinforcement::Surprise)]
}

proptest! {
    #![proptest_config(common::cases(256, 0xC9A))]

    #[test]
    fn excitation_in_unit_interval(ws in weights()) {
        let q = rnn_steady_state(&ws).unwrap();
        prop_assert_eq!(q.len(), ws.len());
        prop_assert!(q.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn reinforcement_sign(ws in weights(), threshold in 0.0f64..2.0, reward in 0.0f64..2.0, pick in any::<prop::sample::Index>(), mode in reinforcement()) {
        let neighbors: Vec<VertexId> = (1..=ws.len() as u32).map(VertexId).collect();
        let mut s = CpnNodeState::new(VertexId(0), neighbors.clone());
        s.weights = ws;
        s.reward_threshold = threshold;
        let k = pick.index(neighbors.len());
        let before = s.weights[k].excite;
        let params = CpnParams { reinforcement: mode, ..CpnParams::default() };
        s.reinforce(neighbors[k], reward, &params);
        if reward >= threshold {
            prop_assert!(s.weights[k].excite >= before);
        } else {
            prop_assert!(s.weights[k].excite <= before);
        }
    }

    #[test]
    fn mailbox_ranked_and_bounded(inserts in prop::collection::vec((0u32..6, 0.1f64..100.0), 0..40), cap in 1usize..6) {
        let mut s = CpnNodeState::new(VertexId(0), vec![VertexId(1)]);
        for (tick, &(r, time)) in inserts.iter().enumerate() {
            s.insert_route(vec![VertexId(0), VertexId(100 + r)], time, tick as u32, cap);
            prop_assert!(s.mailbox.len() <= cap);
            prop_assert!(s.mailbox.windows(2).all(|w| w[0].estimated_time <= w[1].estimated_time));
            let distinct: BTreeSet<_> = s.mailbox.iter().map(|e| e.route.clone()).collect();
            prop_assert_eq!(distinct.len(), s.mailbox.len());
        }
    }
}

proptest! {
    #![proptest_config(common::cases(128, 0xC9B))]

    #[test]
    fn mailbox_routes_are_simple_walks_to_exits(seed in any::<u64>()) {
        let s = random_scenario(&mut seeds::rng(seed));
        let g = &s.graph;
        let mut rng = seeds::rng(seeds::derive(seed, 7));
        let mut net = CpnNetwork::new(g, s.params.cpn.clone(), s.params.walking_speed);
        let mut field = HazardField::new(g.len());
        field.ignite(s.hazard_origin, 0, s.params.fire.growth_rate);
        let mut counters = Counters::default();
        for t in 0..30 {
            field.step(g, &s.params.fire, &mut rng, t + 1);
            let queue: Vec<u32> = (0..g.len() as u32)
                .map(|v| if g.is_exit(VertexId(v)) { 0 } else { rng.gen_range(0..3) })
                .collect();
            let obs = Observation { graph: g, hazard: &field, queue_len: &queue, penalty: s.params.hazard_penalty };
            cpn_tick(&mut net, g, &obs, t, &mut rng, &mut counters).unwrap();
        }
        for v in g.non_exits() {
            for e in &net.node(v).mailbox {
                prop_assert_eq!(e.route[0], v);
                prop_assert!(g.is_exit(*e.route.last().unwrap()));
                let distinct: BTreeSet<_> = e.route.iter().collect();
                prop_assert_eq!(distinct.len(), e.route.len(), "route {:?} has a loop", e.route);
                prop_assert!(e.route.windows(2).all(|w| g.edge_between(w[0], w[1]).is_some()));
                prop_assert!(e.estimated_time.is_finite() && e.estimated_time > 0.0);
            }
        }
    }

    #[test]
    fn acks_keep_the_network_solvable(seed in any::<u64>()) {
        // Long runs of arbitrary acknowledgements still leave every node's
        // RNN with a valid fixed point.
        let mut rng = seeds::rng(seed);
        let n = rng.gen_range(1..6u32);
        let neighbors: Vec<VertexId> = (1..=n).map(VertexId).collect();
        let mut s = CpnNodeState::new(VertexId(0), neighbors);
        let params = CpnParams::default();
        for t in 0..200 {
            let via = VertexId(rng.gen_range(1..=n));
            let ack = Ack { reverse_route: vec![VertexId(99), via, VertexId(0)], measured_time: 0.0, hop_times: vec![rng.gen_range(0.5..50.0), rng.gen_range(0.5..50.0)] };
            let ack = Ack { measured_time: ack.hop_times.iter().sum(), ..ack };
            handle_ack(&mut s, &ack, t, &params);
            if t % 10 == 0 {
                s.renormalize();
            }
        }
        let q = s.excitation(&mut Counters::default()).unwrap();
        prop_assert!(q.iter().all(|&x| (0.0..1.0).contains(&x)));
    }
}
