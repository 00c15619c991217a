use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn etl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etl-sched"))
        .args(args)
        .env_remove("ETLSCHED_OUT")
        .output()
        .expect("spawn etl-sched")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 6] = ["--set", "episodes=2", "--set", "eval_episodes=1", "--set", "workload.n_tasks=30"];

fn small(cmd: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    args.extend(extra);
    etl(&args)
}

#[test]
fn help_lists_every_flag() {
    let top = String::from_utf8(etl(&["--help"]).stdout).unwrap();
    for sub in ["train", "bench", "sweep", "plot", "gen-workload"] {
        assert!(top.contains(sub), "{sub} missing from help");
    }
    let sweep = String::from_utf8(etl(&["sweep", "--help"]).stdout).unwrap();
    for flag in ["--config", "--seed", "--seeds", "--out", "--jobs", "--agents", "--param", "--grid", "--set"] {
        assert!(sweep.contains(flag), "{flag} missing from sweep help");
    }
    assert!(String::from_utf8(etl(&["train", "--help"]).stdout).unwrap().contains("--trace"));
}

#[test]
fn train_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("nested/a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = small("train", out, &["--seed", "42", "--trace"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["reward_curve.csv", "metrics.json", "checkpoint_seed42.json", "trace_seed42.jsonl"] {
        assert!(a.join(name).is_file(), "{name} missing");
    }
    assert_eq!(fs::read(a.join("reward_curve.csv")).unwrap(), fs::read(b.join("reward_curve.csv")).unwrap());
    let curve = fs::read_to_string(a.join("reward_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 2, "header plus one row per episode");
}

#[test]
fn bench_counts_runs_and_rejects_unknown_agents() {
    let dir = tempfile::tempdir().unwrap();
    let o = small("bench", dir.path(), &["--agents", "qtable,random", "--seeds", "1,2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    // 2 agents × 2 seeds, plus one pooled row per agent.
    assert_eq!(csv.lines().count(), 1 + 4 + 2);
    assert!(dir.path().join("bench.json").is_file());

    let o = small("bench", dir.path(), &["--agents", "dqn,heft"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in ["dqn", "ddqn", "qtable", "random", "roundrobin", "leastloaded"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn sweep_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = small("sweep", &out, &["--param", "nodes", "--grid", "2,4,8", "--agents", "leastloaded", "--seeds", "1,2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let long = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 3 * 2);
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap().lines().count(), 1 + 3);

    let svg = dir.path().join("plot.svg");
    let plot = |target: &Path| etl(&["plot", out.join("summary.csv").to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert!(plot(&svg).status.success());
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 1);
    let again = dir.path().join("again.svg");
    plot(&again);
    assert_eq!(fs::read(&svg).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn plot_schema_errors_name_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "param,seed,metric,metric_value\nlr,1,avg_cum_reward,0.5\n").unwrap();
    let o = etl(&["plot", csv.to_str().unwrap(), "--out", dir.path().join("x.svg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("\"value\""), "{}", stderr(&o));

    fs::write(&csv, "param,value,metric,mean,sd,n_ok\n").unwrap();
    let o = etl(&["plot", csv.to_str().unwrap(), "--out", dir.path().join("x.svg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, "{\n  \"format\": \"runcfg-v1\",\n  \"episodes\": -3\n}\n").unwrap();
    let o = etl(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = small("sweep", dir.path(), &["--param", "gamma", "--grid", "0.9,1.0"]);
    assert_eq!(o.status.code(), Some(2));

    let o = small("train", dir.path(), &["--set", "agent.nope=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    fs::write(&file, "").unwrap();
    let o = small("train", &file.join("sub"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn diverging_learning_rate_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = small(
        "train",
        dir.path(),
        &["--set", "agent.lr=1e200", "--set", "agent.warmup_transitions=8", "--set", "agent.batch_size=8"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn gen_workload_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n);
    for (name, seed) in [("a.json", "5"), ("b.json", "5"), ("c.json", "6")] {
        let o = etl(&["gen-workload", "--seed", seed, "--set", "workload.n_tasks=20", "--out", path(name).to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read_to_string(path("a.json")).unwrap();
    assert_eq!(a, fs::read_to_string(path("b.json")).unwrap());
    assert_ne!(a, fs::read_to_string(path("c.json")).unwrap());
    assert!(a.contains("\"tasks\""));
}
