use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dqlab::dqn::{parse_pair, TrainConfig};
use dqlab::env::traffic::{RewardTiming, ServiceLight};
use dqlab::env::{Env, EnvKind, TrafficParams};
use dqlab::par::Parallelism;
use dqlab::{report, runner, Error};

/// Deep Q-learning laboratory: exact oracles, DQN training and diagnostics.
#[derive(Debug, Parser)]
#[command(name = "dqlab", version)]
struct Cli {
    /// Root for outputs when `--out` is not given.
    #[arg(long, env = "DQLAB_OUT", default_value = "runs", global = true)]
    out_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve an environment exactly by value iteration.
    Solve(SolveArgs),
    /// Train one run per seed.
    Train(TrainArgs),
    /// Compute diagnostics over a finished run.
    Diagnose(DiagnoseArgs),
    /// Draw charts over one or more runs of the same environment.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Timing {
    Current,
    Successor,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Service {
    Pre,
    Post,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// `frozenlake` or `trafficlight`.
    env: String,
    #[arg(long)]
    qmax: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, value_enum)]
    service_light: Option<Service>,
    #[arg(long, value_enum)]
    reward_timing: Option<Timing>,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Key/value config file.
    #[arg(long, conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Re-run exactly what a previous run's manifest describes.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Extra `key=value` settings applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// `3`, `0,1,2` or `0..15`; defaults to the config's seed.
    #[arg(long)]
    seeds: Option<String>,
    /// Run seeds one after another on the calling thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    run_dir: PathBuf,
    /// Tracked pair as `state:action`, e.g. `(0,2,0):continue`.
    #[arg(long = "track")]
    tracked: Vec<String>,
    /// Inclusive iteration window `lo..hi`.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(required = true)]
    run_dirs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(text: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range `{text}`");
        }
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| s.trim().parse().with_context(|| format!("bad seed `{s}`"))).collect()
}

fn parse_window(text: &str) -> anyhow::Result<(u64, u64)> {
    let (a, b) = text.split_once("..").ok_or_else(|| anyhow!("window must look like `lo..hi`, got `{text}`"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn solve(args: SolveArgs, root: &Path) -> anyhow::Result<()> {
    let env = match args.env.parse::<EnvKind>()? {
        EnvKind::FrozenLake => Env::frozen_lake(),
        EnvKind::TrafficLight => {
            let mut p = TrafficParams::default();
            if let Some(q) = args.qmax {
                p.q_max = q;
            }
            if let Some(v) = args.p {
                p.p = v;
            }
            if let Some(s) = args.service_light {
                p.service_light = match s {
                    Service::Pre => ServiceLight::Pre,
                    Service::Post => ServiceLight::Post,
                };
            }
            if let Some(t) = args.reward_timing {
                p.reward_timing = match t {
                    Timing::Current => RewardTiming::Current,
                    Timing::Successor => RewardTiming::Successor,
                };
            }
            Env::traffic_light(p)?
        }
    };
    let out = args.out.unwrap_or_else(|| root.join(format!("solve_{}", env.kind())));
    let sol = runner::cmd_solve(&env, args.gamma, &out)?;
    println!("solved {} in {} sweeps (residual {:.3e}); wrote {}", env.kind(), sol.iterations, sol.residual, out.display());
    Ok(())
}

fn train(args: TrainArgs, root: &Path) -> anyhow::Result<()> {
    let mut text = match (&args.config, &args.manifest) {
        (Some(path), _) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(path)) => runner::RunManifest::load(path)?.config,
        (None, None) => String::new(),
    };
    for kv in &args.overrides {
        if !kv.contains('=') {
            bail!("--set expects KEY=VALUE, got `{kv}`");
        }
        text.push('\n');
        text.push_str(kv);
    }
    let cfg = TrainConfig::parse(&text)?;
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => vec![cfg.seed],
    };
    let out = args.out.unwrap_or_else(|| root.join(format!("train_{}", cfg.env.kind())));
    let par = if args.sequential { Parallelism::None } else { Parallelism::Rayon };
    let dirs = runner::cmd_train(&cfg, &seeds, &out, par)?;
    for d in dirs {
        println!("{}", d.display());
    }
    Ok(())
}

fn diagnose(args: DiagnoseArgs, root: &Path) -> anyhow::Result<()> {
    let run = runner::RunDir::open(&args.run_dir)?;
    let tracked = args.tracked.iter().map(|t| parse_pair(&run.config.env, t)).collect::<Result<Vec<_>, _>>()?;
    let window = args.window.as_deref().map(parse_window).transpose()?;
    let out = args.out.unwrap_or_else(|| root.join("diagnose"));
    let summary = runner::cmd_diagnose(&args.run_dir, &tracked, window, &out)?;
    println!("ntk at steps {:?}; {} td rows; wrote {}", summary.ntk_steps, summary.td_rows, out.display());
    for (pair, s) in &summary.cases {
        let label = format!("{}:{}", run.config.env.state_label(pair.0), run.config.env.action_label(pair.1));
        for l in dqlab::diagnostics::CaseLabel::ALL {
            match s.mean(l) {
                Some(m) => println!("{label} {l}: n={} mean dQ={m:.6}", s.count(l)),
                None => println!("{label} {l}: n=0"),
            }
        }
    }
    Ok(())
}

fn report_cmd(args: ReportArgs, root: &Path) -> anyhow::Result<()> {
    let out = args.out.unwrap_or_else(|| root.join("report"));
    let files = report::cmd_report(&args.run_dirs, &out)?;
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

/// 1 for problems the user can fix, 2 for failures inside the library.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NotConverged { .. } | Error::KinkCrossing { .. } | Error::Hook { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let root = cli.out_root;
    let result = match cli.command {
        Command::Solve(a) => solve(a, &root),
        Command::Train(a) => train(a, &root),
        Command::Diagnose(a) => diagnose(a, &root),
        Command::Report(a) => report_cmd(a, &root),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
