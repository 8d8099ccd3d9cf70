use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dqlab::diagnostics::{ntk_with, PairIndex};
use dqlab::dqn::{run_training, TrainConfig};
use dqlab::env::Env;
use dqlab::mdp::{bellman_backup_with, Discount, QTable};
use dqlab::nn::{Architecture, NetworkParams};
use dqlab::par::{map_slice, Parallelism};

const STRATEGIES: [(&str, Parallelism); 2] = [("sequential", Parallelism::None), ("rayon", Parallelism::Rayon)];

fn ntk(c: &mut Criterion) {
    let env = Env::traffic_light(Default::default()).unwrap();
    let params = NetworkParams::init(Architecture::new(env.obs_dim(), env.n_actions()), 7);
    let idx = PairIndex::for_env(&env);
    let mut g = c.benchmark_group("ntk_trafficlight");
    g.sample_size(10);
    for (name, par) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ntk_with(black_box(&params), idx, &env, par).unwrap())
        });
    }
    g.finish();
}

fn bellman(c: &mut Criterion) {
    let env = Env::traffic_light(Default::default()).unwrap();
    let model = env.build_model();
    let q = QTable::filled(env.n_states(), env.n_actions(), -100.0);
    let gamma = Discount::new(0.99).unwrap();
    let mut g = c.benchmark_group("bellman_sweep_trafficlight");
    for (name, par) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| bellman_backup_with(&model, black_box(&q), gamma, par).unwrap())
        });
    }
    g.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let cfg = TrainConfig { total_steps: 3000, snapshot_every: 1000, ..TrainConfig::default() };
    let seeds = [0u64, 1, 2, 3];
    let mut g = c.benchmark_group("seed_sweep_frozenlake_3k");
    g.sample_size(10);
    for (name, par) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                map_slice(par, &seeds, |&seed| run_training(&TrainConfig { seed, ..cfg.clone() }, &mut []).unwrap().buffer_len)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, ntk, bellman, seed_sweep);
criterion_main!(benches);
