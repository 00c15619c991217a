use std::collections::BTreeMap;

use etl_sched::{compare_reports, MetricsReport};
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    rows: Vec<Row>,
}

#[derive(Deserialize)]
struct Row {
    agent: String,
    asd: f64,
    tcr: f64,
    tp: f64,
    rc: f64,
}

fn published() -> BTreeMap<String, MetricsReport> {
    let text = include_str!("fixtures/published_comparison.json");
    let fixture: Fixture = serde_json::from_str(text).unwrap();
    fixture
        .rows
        .into_iter()
        .map(|r| {
            let report = MetricsReport {
                asd: r.asd,
                tcr: r.tcr,
                tp: r.tp,
                rc: r.rc,
                avg_cum_reward: 0.0,
                episodes: 1,
                seeds: vec![],
                config_fingerprint: "published".into(),
            };
            (r.agent, report)
        })
        .collect()
}

#[test]
fn published_table_ranks_in_listed_order() {
    let table = compare_reports(&published()).unwrap();
    assert!(table.warnings.is_empty());
    let rank_of = |name: &str| table.rows.iter().find(|r| r.agent == name).unwrap().ranks;
    assert_eq!(rank_of("dqn-embed"), [1; 4]);
    assert_eq!(rank_of("ppo"), [2; 4]);
    assert_eq!(rank_of("qlearning"), [7; 4]);
    // Every metric orders the seven rows the same way.
    let order = |k: usize| {
        let mut rows: Vec<_> = table.rows.iter().collect();
        rows.sort_by_key(|r| r.ranks[k]);
        rows.iter().map(|r| r.agent.clone()).collect::<Vec<_>>()
    };
    assert!((1..4).all(|k| order(k) == order(0)));
    let text = table.render();
    assert!(text.contains("dqn-embed") && text.contains("(1)"), "{text}");
}
