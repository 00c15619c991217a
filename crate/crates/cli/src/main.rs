use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use etl_sched::experiments::{
    apply_override, bench, render_svg, sweep, train, AgentKind, AxisScale, PlotData, RunConfig, SweepParam,
    SweepSpec,
};
use etl_sched::{generate_dag, Error};

/// Reinforcement-learning scheduler for ETL task DAGs on a simulated cluster.
#[derive(Parser)]
#[command(name = "etl-sched", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the DQN agent per seed and evaluate it greedily.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Also dump the first evaluation episode's event trace per seed.
        #[arg(long)]
        trace: bool,
    },
    /// Compare agents on identical workloads, cluster and seeds.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated agents: dqn, ddqn, qtable, random, roundrobin, leastloaded.
        #[arg(long, default_value = "dqn,random,roundrobin,leastloaded")]
        agents: String,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Train and evaluate over a parameter grid × seeds.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// lr, gamma or nodes.
        #[arg(long)]
        param: String,
        /// Comma-separated grid values; defaults to the parameter's standard grid.
        #[arg(long)]
        grid: Option<String>,
        /// Agent to sweep.
        #[arg(long, default_value = "dqn")]
        agents: String,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Render a sweep CSV (long-form or summary) as an SVG line chart.
    Plot {
        csv: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// X axis scale; defaults to log for learning-rate sweeps.
        #[arg(long, value_enum)]
        scale: Option<Scale>,
    },
    /// Generate one workload DAG and print it as JSON.
    GenWorkload {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Workload seed; defaults to the config's.
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-path override, e.g. `workload.n_tasks=50`. Repeatable.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single master seed (replaces the config's seed list).
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated master seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory; defaults to the config's, else $ETLSCHED_OUT/<command>, else runs/<command>.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Dotted-path override, e.g. `agent.lr=1e-4` or `episodes=50`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Linear,
    Log,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_list<T: std::str::FromStr>(flag: &str, raw: &str) -> anyhow::Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("--{flag}: cannot parse {s:?}")).into()))
        .collect()
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for raw in overrides {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {raw:?}: expected PATH=VALUE")))?;
        cfg = apply_override(&cfg, key.trim(), value.trim())?;
    }
    Ok(cfg)
}

impl RunArgs {
    fn resolve(&self, command: &str) -> anyhow::Result<(RunConfig, PathBuf)> {
        let mut cfg = load_config(self.config.as_deref(), &self.set)?;
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(list) = &self.seeds {
            cfg.seeds = parse_list("seeds", list)?;
        }
        cfg.validate()?;
        let out = self.out.clone().unwrap_or_else(|| cfg.resolve_output_dir(command));
        Ok((cfg, out))
    }
}

fn write_out(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| Error::Config(format!("cannot create output dir {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Train { run, trace } => {
            let (cfg, out) = run.resolve("train")?;
            let runs = train(&cfg, &out, trace)?;
            for r in &runs {
                println!(
                    "seed {}: asd {:.4} tcr {:.2} tp {:.3} rc {:.4}",
                    r.seed, r.report.asd, r.report.tcr, r.report.tp, r.report.rc
                );
            }
            println!("artifacts in {}", out.display());
        }
        Cmd::Bench { run, agents, jobs } => {
            let (cfg, out) = run.resolve("bench")?;
            let agents = AgentKind::parse_list(&agents)?;
            let result = bench(&cfg, &agents, Some(&out), jobs)?;
            println!("{:<12} {:>10} {:>8} {:>8} {:>8}", "agent", "asd", "tcr", "tp", "rc");
            for row in &result.table.rows {
                println!("{:<12} {:>10.4} {:>8.2} {:>8.3} {:>8.4}", row.agent, row.asd, row.tcr, row.tp, row.rc);
            }
            for w in &result.table.warnings {
                eprintln!("warning: {w}");
            }
            println!("artifacts in {}", out.display());
        }
        Cmd::Sweep { run, param, grid, agents, jobs } => {
            let (base, out) = run.resolve("sweep")?;
            let param: SweepParam = param.parse()?;
            let agent = match AgentKind::parse_list(&agents)?.as_slice() {
                [one] => *one,
                _ => return Err(Error::Config("sweep takes exactly one agent".into()).into()),
            };
            let grid = match grid {
                Some(g) => parse_list("grid", &g)?,
                None => param.default_grid(),
            };
            let spec = SweepSpec { param, grid, agent, base };
            let rows = sweep(&spec, Some(&out), jobs)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("{} runs ({failed} failed); artifacts in {}", rows.len(), out.display());
            if failed > 0 {
                return Err(Error::Numeric(format!("{failed} sweep runs failed; see the status column")).into());
            }
        }
        Cmd::Plot { csv, out, scale } => {
            let text = fs::read_to_string(&csv)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", csv.display())))?;
            let data = PlotData::from_csv(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", csv.display())),
                other => other,
            })?;
            let scale = match scale {
                Some(Scale::Log) => AxisScale::Log,
                Some(Scale::Linear) => AxisScale::Linear,
                None if data.x_label == SweepParam::LearningRate.name() => AxisScale::Log,
                None => AxisScale::Linear,
            };
            write_out(&out, &render_svg(&data, scale)?)?;
        }
        Cmd::GenWorkload { config, seed, out, set } => {
            let mut cfg = load_config(config.as_deref(), &set)?;
            if let Some(s) = seed {
                cfg.workload.seed = s;
            }
            let json = generate_dag(&cfg.workload)?.to_json().context("serializing workload")?;
            match out {
                Some(path) => write_out(&path, &json)?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(2, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
