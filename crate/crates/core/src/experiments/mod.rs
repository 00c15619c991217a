//! Run configuration, seeded run orchestration and artifact writers.

mod config;
mod plot;
mod runner;
mod sweep;

pub use config::{
    apply_override, derive_run_seed, AgentKind, ClusterConfig, RunConfig, TabularConfig,
    CONFIG_FORMAT, OUTPUT_ROOT_ENV,
};
pub use plot::{render_svg, AxisScale, PlotData};
pub use runner::{
    bench, checkpoint_file, eval_workload_seed, run_agent, trace_file, train, BenchOutput, EpisodeLog, RunOutput,
    BENCH_CSV, BENCH_JSON, METRICS_FILE, REWARD_CURVE_FILE,
};
pub use sweep::{
    summarize, sweep, SweepParam, SweepRow, SweepSpec, SweepSummary, SUMMARY_CSV, SWEEP_CSV,
};
