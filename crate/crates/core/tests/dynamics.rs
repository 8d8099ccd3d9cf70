use dqlab::env::{mirror, sample_step, tl_transitions, Env, TrafficParams, TrafficState};
use dqlab::mdp::{bellman_backup, expected_td, value_iteration, ActionId, Discount, QTable, StateId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn traffic(q_max: usize, p: f64) -> Env {
    Env::traffic_light(TrafficParams { q_max, p, ..TrafficParams::default() }).unwrap()
}

#[test]
fn sampled_frequencies_match_the_model() {
    let env = traffic(5, 0.45);
    let model = env.build_model();
    let s = env.parse_state("(0,0,2)").unwrap();
    let a = env.parse_action("continue").unwrap();
    let outcomes = model.outcomes(s, a).to_vec();
    assert_eq!(outcomes.len(), 4);
    let n = 1_000_000;
    let mut counts = vec![0u64; outcomes.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..n {
        let (next, _) = sample_step(&model, s, a, &mut rng);
        counts[outcomes.iter().position(|o| o.next == next).unwrap()] += 1;
    }
    for (o, &c) in outcomes.iter().zip(&counts) {
        let sigma = (n as f64 * o.prob * (1.0 - o.prob)).sqrt();
        let dev = (c as f64 - n as f64 * o.prob).abs();
        assert!(dev <= 3.0 * sigma, "{}: {c} draws vs p={} ({:.1} sigma)", env.state_label(o.next), o.prob, dev / sigma);
    }
}

#[test]
fn optimal_tables_are_bellman_fixed_points() {
    let gamma = Discount::new(0.99).unwrap();
    let tol = 1e-9;
    for env in [Env::frozen_lake(), traffic(5, 0.45)] {
        let model = env.build_model();
        let sol = value_iteration(&model, gamma, tol, 100_000).unwrap();
        let td = expected_td(&model, &sol.q, gamma).unwrap();
        let worst = td.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(worst <= tol / (1.0 - gamma.get()), "{}: {worst}", env.kind());
    }
}

#[test]
fn residual_shrinks_geometrically() {
    let gamma = Discount::new(0.99).unwrap();
    let model = traffic(3, 0.45).build_model();
    let mut q = QTable::zeros(model.n_states(), model.n_actions());
    let mut last = f64::INFINITY;
    for sweep in 0..200 {
        let next = bellman_backup(&model, &q, gamma).unwrap();
        let r = next.max_abs_diff(&q).unwrap();
        if sweep > 0 {
            assert!(r <= gamma.get() * last + 1e-9, "sweep {sweep}: {r} after {last}");
        }
        last = r;
        q = next;
    }
}

proptest! {
    #[test]
    fn rows_are_distributions(q_max in 1usize..7, p in 0.0f64..=1.0) {
        let env = traffic(q_max, p);
        let model = env.build_model();
        for s in 0..model.n_states() {
            for a in 0..model.n_actions() {
                let out = model.outcomes(StateId(s), ActionId(a));
                let total: f64 = out.iter().map(|o| o.prob).sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
                prop_assert!(out.len() <= 4);
            }
        }
    }

    #[test]
    fn queues_step_by_one_and_stay_capped(q_max in 1usize..7, p in 0.0f64..=1.0, id in 0usize..10_000, a in 0usize..2) {
        let params = TrafficParams { q_max, p, ..TrafficParams::default() };
        let s = TrafficState::from_id(StateId(id % params.n_states()), q_max);
        for (next, prob, _) in tl_transitions(s, ActionId(a), &params) {
            prop_assert!(prob >= 0.0);
            prop_assert!(next.q_h <= q_max && next.q_v <= q_max);
            prop_assert!(next.q_h.abs_diff(s.q_h) <= 1 && next.q_v.abs_diff(s.q_v) <= 1);
        }
    }

    #[test]
    fn mirroring_commutes_with_the_dynamics(q_max in 1usize..6, p in 0.05f64..0.95, id in 0usize..10_000, a in 0usize..2) {
        let params = TrafficParams { q_max, p, ..TrafficParams::default() };
        let s = TrafficState::from_id(StateId(id % params.n_states()), q_max);
        let mut direct: Vec<_> = tl_transitions(mirror(s), ActionId(a), &params)
            .into_iter()
            .map(|(n, pr, r)| (n.id(q_max).0, pr.to_bits(), r.to_bits()))
            .collect();
        let mut mirrored: Vec<_> = tl_transitions(s, ActionId(a), &params)
            .into_iter()
            .map(|(n, pr, r)| (mirror(n).id(q_max).0, pr.to_bits(), r.to_bits()))
            .collect();
        direct.sort();
        mirrored.sort();
        prop_assert_eq!(direct, mirrored);
    }

    #[test]
    fn sampling_follows_the_seed(seed in any::<u64>()) {
        let env = traffic(5, 0.45);
        let model = env.build_model();
        let walk = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = env.initial_state();
            (0..50).map(|i| { s = sample_step(&model, s, ActionId(i % 2), &mut rng).0; s }).collect::<Vec<_>>()
        };
        prop_assert_eq!(walk(seed), walk(seed));
    }
}
