use etl_sched::cluster::{NodeSpec, DEFAULT_PROFILE};
use etl_sched::metrics::{compute_metrics, TaskRecord};
use etl_sched::workload::{topological_order, Stage};
use etl_sched::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_workload(seed: u64, edge_prob: f64) -> WorkloadConfig {
    WorkloadConfig {
        n_tasks: 30,
        layer_widths: [6; 5],
        edge_prob,
        seed,
        ..WorkloadConfig::default()
    }
}

fn random_rollout(env: &mut EtlEnv, wl: &WorkloadConfig, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = vec![env.reset(wl, seed).unwrap()];
    while !env.is_terminal() {
        let a = rng.random_range(0..env.num_actions());
        states.push(env.step(a).unwrap().next_state);
    }
    states
}

fn outcome(task: usize, success: bool, latency: f64, cost: f64) -> TaskOutcome {
    TaskOutcome {
        task,
        status: if success {
            TaskStatus::Completed
        } else {
            TaskStatus::MissedDeadline
        },
        success,
        latency,
        cost,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reward_stays_in_bounds(
        a1 in 0.0..3.0f64, a2 in 0.0..3.0f64, a3 in 0.0..3.0f64,
        raw in prop::collection::vec((any::<bool>(), 0.0..1e4f64, 0.0..1e4f64), 0..20),
    ) {
        prop_assume!(a1 + a2 + a3 > 0.0);
        let w = RewardWeights { a1, a2, a3, t_max: 7.0, c_max: 3.0 };
        let outcomes: Vec<TaskOutcome> = raw
            .iter()
            .enumerate()
            .map(|(i, &(ok, t, c))| outcome(i, ok, t, c))
            .collect();
        let r = compute_reward(&outcomes, &w);
        prop_assert!(r >= -(a2 + a3) - 1e-12 && r <= a1 + 1e-12, "r={r}");
        if outcomes.is_empty() {
            prop_assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn dag_invariants(seed in any::<u64>(), edge_prob in 0.0..1.0f64) {
        let cfg = small_workload(seed, edge_prob);
        let dag = generate_dag(&cfg).unwrap();
        prop_assert_eq!(dag.len(), 30);
        prop_assert_eq!(topological_order(&dag).unwrap().len(), 30);
        let parents = dag.parents();
        let fastest = (4.0, 20.0);
        for t in &dag.tasks {
            prop_assert!(t.work > 0.0);
            prop_assert!(t.deadline > t.release);
            prop_assert!(t.priority <= 4);
            if t.stage != Stage::Extract {
                prop_assert!(!parents[t.id].is_empty(), "task {} has no parent", t.id);
            }
            // Compute and I/O alone on the fastest profile node fit the window.
            prop_assert!(t.deadline_window() >= t.work / fastest.0 + t.input_mb / fastest.1);
        }
        prop_assert_eq!(&dag, &generate_dag(&cfg).unwrap());
    }

    #[test]
    fn observations_stay_in_unit_box(seed in 0u64..10_000, nodes in 1usize..6) {
        let cluster = ClusterSpec::from_profile(DEFAULT_PROFILE, nodes, seed).unwrap();
        let mut env = EtlEnv::new(EnvConfig::default(), cluster).unwrap();
        for s in random_rollout(&mut env, &small_workload(seed, 0.2), seed) {
            prop_assert_eq!(s.len(), 12 + 4 * nodes);
            prop_assert!(s.iter().all(|x| (0.0..=1.0).contains(x)), "{s:?}");
        }
    }

    #[test]
    fn episodes_conserve_tasks(seed in 0u64..10_000) {
        let cluster = ClusterSpec::from_profile(DEFAULT_PROFILE, 3, seed).unwrap();
        let mut env = EtlEnv::new(EnvConfig::default(), cluster).unwrap();
        random_rollout(&mut env, &small_workload(seed, 0.2), seed);
        let counts = env.sim().unwrap().status_counts();
        prop_assert_eq!(counts.terminal_total(), 30);
        prop_assert_eq!(counts.in_flight, 0);
        let m = compute_metrics(&[env.episode_trace().unwrap()], 0.9).unwrap();
        prop_assert!((0.0..=100.0).contains(&m.tcr));
        prop_assert!((0.0..=1.0).contains(&m.rc));
    }

    #[test]
    fn step_depends_only_on_state_and_action(seed in 0u64..10_000, cut in 0usize..40) {
        let cluster = ClusterSpec::from_profile(DEFAULT_PROFILE, 3, seed).unwrap();
        let mut env = EtlEnv::new(EnvConfig::default(), cluster).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        env.reset(&small_workload(seed, 0.2), seed).unwrap();
        for _ in 0..cut {
            if env.is_terminal() {
                break;
            }
            env.step(rng.random_range(0..env.num_actions())).unwrap();
        }
        prop_assume!(!env.is_terminal());
        let mut twin = env.clone();
        let a = rng.random_range(0..env.num_actions());
        prop_assert_eq!(env.step(a).unwrap(), twin.step(a).unwrap());
        prop_assert_eq!(env.sim().unwrap().trace(), twin.sim().unwrap().trace());
    }

    #[test]
    fn metrics_ignore_trace_order(seed in 0u64..10_000, rot in 0usize..4) {
        let cluster = ClusterSpec::from_profile(DEFAULT_PROFILE, 2, 1).unwrap();
        let mut env = EtlEnv::new(EnvConfig::default(), cluster).unwrap();
        let traces: Vec<_> = (0..4)
            .map(|k| {
                random_rollout(&mut env, &small_workload(seed + k, 0.2), seed + k);
                env.episode_trace().unwrap()
            })
            .collect();
        let mut rotated = traces.clone();
        rotated.rotate_left(rot);
        let a = compute_metrics(&traces, 0.9).unwrap();
        let b = compute_metrics(&rotated, 0.9).unwrap();
        prop_assert_eq!(a.asd, b.asd);
        prop_assert_eq!(a.tcr, b.tcr);
        prop_assert_eq!(a.tp, b.tp);
        prop_assert_eq!(a.rc, b.rc);
        prop_assert_eq!(a.avg_cum_reward, b.avg_cum_reward);
    }

    #[test]
    fn slower_nodes_never_gain_successes(seed in 0u64..10_000, speed in 0.5..8.0f64, factor in 0.05..1.0f64) {
        let chain = WorkloadConfig {
            n_tasks: 5,
            layer_widths: [1; 5],
            edge_prob: 1.0,
            seed,
            ..WorkloadConfig::default()
        };
        let successes = |speed: f64| {
            let cluster = ClusterSpec {
                nodes: vec![NodeSpec { id: 0, speed, bandwidth: 10.0, mem_capacity: 1e6, slots: 1, cost_rate: 1.0 }],
                coord_base: 0.05,
                coord_per_node: 0.15,
            };
            let mut env = EtlEnv::new(EnvConfig::default(), cluster).unwrap();
            env.reset(&chain, seed).unwrap();
            while !env.is_terminal() {
                let a = if env.candidate().is_some() { 0 } else { env.defer_action() };
                env.step(a).unwrap();
            }
            env.episode_trace().unwrap().tasks.iter().filter(|t| t.success).count()
        };
        prop_assert!(successes(speed * factor) <= successes(speed));
    }
}

#[test]
fn rewards_sum_each_task_once() {
    let cluster = ClusterSpec::from_profile(DEFAULT_PROFILE, 3, 5).unwrap();
    let mut env = EtlEnv::new(EnvConfig::default(), cluster).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    env.reset(&small_workload(9, 0.2), 9).unwrap();
    let mut seen = vec![0usize; 30];
    while !env.is_terminal() {
        let legal = env.legal_actions();
        let free: Vec<usize> = (0..env.defer_action()).filter(|&k| legal[k]).collect();
        let a = if free.is_empty() { env.defer_action() } else { free[rng.random_range(0..free.len())] };
        for o in env.step(a).unwrap().info.outcomes {
            seen[o.task] += 1;
        }
    }
    assert!(seen.iter().all(|&n| n == 1), "{seen:?}");
    let trace = env.episode_trace().unwrap();
    let by_record: Vec<&TaskRecord> = trace.tasks.iter().collect();
    assert_eq!(by_record.len(), 30);
}
