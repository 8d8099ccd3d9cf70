use dqlab::diagnostics::{case_averages, ntk, CaseLabel, PairIndex};
use dqlab::dqn::{epsilon, BatchElement, CaseBinding, ReplayBuffer, ReplayEntry, StepRecord, TrackedQ, TrainConfig};
use dqlab::env::{Env, TrafficParams};
use dqlab::mdp::{ActionId, StateId};
use dqlab::nn::{Architecture, Loss, NetworkParams, Sample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_arch(d_in: usize, n: usize, h: usize) -> Architecture {
    Architecture { d_in, hidden: [h, h], n_actions: n }
}

fn random_net(arch: Architecture, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = NetworkParams::init(arch, seed);
    for t in p.flat_mut() {
        *t += rng.gen_range(-0.1..0.1);
    }
    p
}

fn entry(step: u64) -> ReplayEntry {
    ReplayEntry {
        obs: vec![],
        action: ActionId(0),
        reward: 0.0,
        next_obs: vec![],
        state: StateId(0),
        next_state: StateId(0),
        step,
    }
}

proptest! {
    #[test]
    fn gradient_matches_finite_differences(
        seed in any::<u64>(),
        d_in in 1usize..6,
        n in 2usize..5,
        h in 2usize..9,
        x in prop::collection::vec(-2.0f64..2.0, 6),
        a in 0usize..4,
    ) {
        let a = a % n;
        let params = random_net(small_arch(d_in, n, h), seed);
        let obs = &x[..d_in];
        let mut act = params.activations();
        params.forward_into(obs, &mut act);
        let kink_free = (0..2).all(|l| act.pre_activations(l).iter().all(|z| z.abs() > 1e-3));
        prop_assume!(kink_free);
        let g = params.grad_q(obs, a);
        let step = 1e-6;
        let mut probe = params.clone();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..params.n_params() {
            let t = params.flat()[i];
            probe.flat_mut()[i] = t + step;
            let up = probe.forward(obs).unwrap()[a];
            probe.flat_mut()[i] = t - step;
            let down = probe.forward(obs).unwrap()[a];
            probe.flat_mut()[i] = t;
            let fd = (up - down) / (2.0 * step);
            num += (fd - g[i]).powi(2);
            den += g[i] * g[i];
        }
        prop_assert!((num / den).sqrt() < 1e-5);
    }

    #[test]
    fn advantage_offset_leaves_q_unchanged(seed in any::<u64>(), c in -4i32..=4, x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let params = random_net(small_arch(3, 4, 5), seed);
        let mut shifted = params.clone();
        let arch = *params.arch();
        for i in arch.advantage_bias_range() {
            shifted.flat_mut()[i] += c as f64 * 0.25;
        }
        let q0 = params.forward(&x).unwrap();
        let q1 = shifted.forward(&x).unwrap();
        for (u, v) in q0.iter().zip(&q1) {
            prop_assert!((u - v).abs() <= 1e-12, "{u} vs {v}");
        }
    }

    #[test]
    fn forward_is_pure_and_flattening_round_trips(seed in any::<u64>(), x in prop::collection::vec(-1.0f64..1.0, 6)) {
        let params = random_net(Architecture::new(6, 2), seed);
        let q = params.forward(&x).unwrap();
        prop_assert_eq!(q.clone(), params.forward(&x).unwrap());
        let back = NetworkParams::from_flat(*params.arch(), params.flat().to_vec()).unwrap();
        prop_assert_eq!(&back, &params);
        prop_assert_eq!(params.grad_q(&x, 1), back.grad_q(&x, 1));
    }

    #[test]
    fn singleton_mse_gradient_is_minus_delta_times_grad_q(seed in any::<u64>(), target in -20.0f64..20.0, a in 0usize..2) {
        let params = random_net(small_arch(4, 2, 6), seed);
        let obs = [0.3, -0.7, 0.1, 0.9];
        let q = params.forward(&obs).unwrap()[a];
        let (g, _) = params.loss_grad(&[Sample { obs: &obs, action: a, target }], Loss::Mse).unwrap();
        let gq = params.grad_q(&obs, a);
        for (x, y) in g.iter().zip(&gq) {
            prop_assert!((x + (target - q) * y).abs() <= 1e-9 * (1.0 + y.abs() * (target - q).abs()));
        }
    }

    #[test]
    fn replay_keeps_the_latest_entries(capacity in 1usize..40, pushes in 0u64..200) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(entry(i));
        }
        let kept: Vec<u64> = buf.iter_oldest_first().map(|e| e.step).collect();
        let first = pushes.saturating_sub(capacity as u64);
        prop_assert_eq!(kept, (first..pushes).collect::<Vec<_>>());
    }

    #[test]
    fn epsilon_is_monotone_with_exact_endpoints(total in 1u64..5000, frac in 0.01f64..1.0, lo in 0.0f64..0.5) {
        let cfg = TrainConfig { total_steps: total, exploration_fraction: frac, exploration_final: lo, ..TrainConfig::default() };
        prop_assert_eq!(epsilon(0, &cfg), if (frac * total as f64).floor() == 0.0 { lo } else { 1.0 });
        prop_assert_eq!(epsilon(total, &cfg), lo);
        let mut last = f64::INFINITY;
        for t in 0..=total {
            let e = epsilon(t, &cfg);
            prop_assert!(e <= last && e >= lo && e <= 1.0);
            last = e;
        }
    }

    #[test]
    fn config_survives_its_text_form(
        steps in 0u64..10_000_000,
        lr in 1e-7f64..1e-1,
        batch in 1usize..256,
        seed in any::<u64>(),
        huber in any::<bool>(),
        fl in any::<bool>(),
    ) {
        let env = if fl { Env::frozen_lake() } else { Env::traffic_light(TrafficParams::default()).unwrap() };
        let cfg = TrainConfig {
            total_steps: steps,
            learning_rate: lr,
            batch_size: batch,
            seed,
            loss: if huber { Loss::Huber } else { Loss::Mse },
            ..TrainConfig::for_env(env)
        };
        prop_assert_eq!(TrainConfig::parse(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn ntk_is_a_gram_matrix(seed in any::<u64>()) {
        let env = Env::traffic_light(TrafficParams { q_max: 1, ..TrafficParams::default() }).unwrap();
        let params = random_net(small_arch(env.obs_dim(), env.n_actions(), 8), seed);
        let k = ntk(&params, PairIndex::for_env(&env), &env).unwrap();
        prop_assert!(k.asymmetry() <= 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..20 {
            let v: Vec<f64> = (0..k.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            prop_assert!(k.quadratic_form(&v) >= -1e-9);
        }
    }

    #[test]
    fn every_iteration_gets_exactly_one_case(
        window in prop::collection::vec((any::<bool>(), -5.0f64..5.0, -1.0f64..1.0), 1..120),
        positive in any::<bool>(),
    ) {
        let tracked = (StateId(2), ActionId(0));
        let records: Vec<StepRecord> = window
            .iter()
            .enumerate()
            .map(|(i, &(hit, delta, dq))| {
                let el = |s| BatchElement {
                    state: StateId(s),
                    action: ActionId(0),
                    next_state: StateId(0),
                    reward: 0.0,
                    delta,
                    entry_step: 0,
                    visits: 1,
                    at_reset: false,
                };
                StepRecord {
                    iteration: i as u64,
                    state: StateId(0),
                    action: ActionId(0),
                    reward: 0.0,
                    next_state: StateId(0),
                    epsilon: 0.0,
                    synced: false,
                    reset: false,
                    batch: vec![el(if hit { 2 } else { 1 }), el(3)],
                    tracked: vec![TrackedQ { state: tracked.0, action: tracked.1, before: 0.0, after: dq }],
                }
            })
            .collect();
        let binding = if positive { CaseBinding::Positive } else { CaseBinding::Negative };
        let summary = case_averages(&records, tracked, binding).unwrap();
        let counts: usize = CaseLabel::ALL.iter().map(|&l| summary.count(l)).sum();
        prop_assert_eq!(counts, records.len());
        prop_assert_eq!(summary.count(CaseLabel::Case2), window.iter().filter(|w| !w.0).count());
    }
}
