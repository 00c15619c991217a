use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use etl_sched::agents::{Heuristic, HeuristicKind};
use etl_sched::cluster::DEFAULT_PROFILE;
use etl_sched::nn::Sample;
use etl_sched::{generate_dag, ClusterSpec, EnvConfig, EtlEnv, QNetwork, WorkloadConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Default network shape for an 8-node cluster: 12 + 4·8 inputs, 9 actions.
const STATE: usize = 44;
const ACTIONS: usize = 9;

fn network(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = QNetwork::init(STATE, 64, 32, ACTIONS, &mut rng);
    let states: Vec<Vec<f64>> = (0..64).map(|_| (0..STATE).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let batch: Vec<Sample> = states
        .iter()
        .map(|s| Sample { state: s, action: rng.random_range(0..ACTIONS), target: rng.random_range(-1.0..1.0) })
        .collect();

    c.bench_function("q_values", |b| b.iter(|| net.q_values(black_box(&states[0])).unwrap()));
    c.bench_function("backward_batch64", |b| b.iter(|| net.backward(black_box(&batch)).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let wl = WorkloadConfig::default();
    c.bench_function("generate_dag_200", |b| b.iter(|| generate_dag(black_box(&wl)).unwrap()));

    let cluster = ClusterSpec::from_profile(DEFAULT_PROFILE, 8, 7).unwrap();
    let env = EtlEnv::new(EnvConfig::default(), cluster).unwrap();
    c.bench_function("episode_leastloaded", |b| {
        b.iter_batched(
            || (env.clone(), Heuristic::new(HeuristicKind::LeastLoaded), ChaCha8Rng::seed_from_u64(3)),
            |(mut env, mut h, mut rng)| {
                env.reset(&wl, 3).unwrap();
                while !env.is_terminal() {
                    let a = h.select(&env, &mut rng);
                    env.step(a).unwrap();
                }
                env.episode_trace().unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, network, simulation);
criterion_main!(benches);
