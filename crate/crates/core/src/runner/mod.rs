//! Persistent runs: oracle solves, seeded training sweeps and offline
//! diagnostics over a run directory.

pub mod records;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    case_averages, decomposition_check, ntk, td_stream, visit_histogram_from_counts, write_cases_csv,
    write_env_gap_csv, write_td_stream_csv, CaseLabel, CaseSummary, EnvGap, PairIndex, TdBatch,
};
use crate::dqn::{run_training, CaseBinding, StepRecord, TrainConfig, TrainHook, Trainer};
use crate::env::traffic::{RewardTiming, ServiceLight};
use crate::env::Env;
use crate::error::{contract, io_err, Error, Result};
use crate::mdp::{greedy_policy, value_iteration, ActionId, Discount, QTable, Solution, StateId};
use crate::nn::NetworkParams;
use crate::par::{map_slice, Parallelism};
use records::RecordWriter;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
pub const Q_STAR_FILE: &str = "q_star.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const Q_TRAJECTORY_FILE: &str = "q_trajectory.csv";
pub const VISITS_FILE: &str = "visits.csv";
pub const FINAL_PARAMS_FILE: &str = "final_params.json";
pub const PARAMS_DIR: &str = "params";

const MANIFEST_FORMAT: &str = "dqlab-run/v1";
const VI_TOL: f64 = 1e-9;
const VI_MAX_ITER: usize = 100_000;

/// Everything needed to reproduce a run, written before training starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub seed: u64,
    pub env: Env,
    /// Complete key/value config; parsing it reproduces the run.
    pub config: String,
    pub created_unix: u64,
    pub case_binding: CaseBinding,
    pub event_order: String,
    pub crate_version: String,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(cfg: &TrainConfig) -> Self {
        RunManifest {
            format: MANIFEST_FORMAT.to_string(),
            seed: cfg.seed,
            env: cfg.env,
            config: cfg.to_kv(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            case_binding: cfg.case_binding,
            event_order: event_order(&cfg.env),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            artifacts: [
                CONFIG_FILE,
                Q_STAR_FILE,
                METRICS_FILE,
                Q_TRAJECTORY_FILE,
                VISITS_FILE,
                FINAL_PARAMS_FILE,
                PARAMS_DIR,
                records::STEPS_FILE,
                records::BATCH_FILE,
                records::TRACKED_FILE,
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Parse { path: path.to_path_buf(), reason: format!("unknown format `{}`", m.format) });
        }
        Ok(m)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        TrainConfig::parse(&self.config)
    }
}

fn event_order(env: &Env) -> String {
    match env {
        Env::FrozenLake => "n/a".to_string(),
        Env::TrafficLight(p) => format!(
            "service_light={},reward_timing={}",
            match p.service_light {
                ServiceLight::Pre => "pre",
                ServiceLight::Post => "post",
            },
            match p.reward_timing {
                RewardTiming::Current => "current",
                RewardTiming::Successor => "successor",
            }
        ),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Exact optimal Q table by value iteration.
pub fn solve(env: &Env, gamma: f64) -> Result<Solution> {
    value_iteration(&env.build_model(), Discount::new(gamma)?, VI_TOL, VI_MAX_ITER)
}

/// Writes `q_star.csv`, `states.csv`, `policy.csv` and `gap_report.csv`.
pub fn cmd_solve(env: &Env, gamma: f64, out_dir: &Path) -> Result<Solution> {
    let sol = solve(env, gamma)?;
    create_dir(out_dir)?;
    sol.q.write_csv(&out_dir.join(Q_STAR_FILE))?;

    let mut states = String::from("state,label\n");
    for s in 0..env.n_states() {
        states.push_str(&format!("{s},\"{}\"\n", env.state_label(StateId(s))));
    }
    write_text(&out_dir.join("states.csv"), &states)?;

    let policy = greedy_policy(&sol.q);
    let mut table = String::from("state,label");
    for a in 0..env.n_actions() {
        table.push_str(&format!(",q_{}", env.action_label(ActionId(a))));
    }
    table.push_str(",greedy\n");
    for s in 0..env.n_states() {
        let st = StateId(s);
        table.push_str(&format!("{s},\"{}\"", env.state_label(st)));
        for v in sol.q.row(st) {
            table.push_str(&format!(",{v}"));
        }
        let best: Vec<&str> = policy.argmax_sets[s].iter().map(|&a| env.action_label(a)).collect();
        table.push_str(&format!(",{}\n", best.join("|")));
    }
    write_text(&out_dir.join("policy.csv"), &table)?;
    write_env_gap_csv(&EnvGap::new(env, &sol.q)?, &out_dir.join("gap_report.csv"))?;
    Ok(sol)
}

/// Directory of one seed under a sweep root.
pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}"))
}

pub fn params_file(run_dir: &Path, kind: &str, step: u64) -> PathBuf {
    run_dir.join(PARAMS_DIR).join(format!("{kind}_{step}.json"))
}

/// Parameter snapshot steps a finished run is expected to contain.
pub fn expected_snapshot_steps(cfg: &TrainConfig) -> Vec<u64> {
    let mut steps = vec![0];
    if cfg.param_snapshot_every > 0 {
        let mut t = cfg.param_snapshot_every;
        while t < cfg.total_steps {
            steps.push(t);
            t += cfg.param_snapshot_every;
        }
    }
    if cfg.total_steps > 0 {
        steps.push(cfg.total_steps);
    }
    steps
}

/// Streams step records and parameter files into a run directory.
struct RunRecorder {
    dir: PathBuf,
    writer: Option<RecordWriter>,
    snapshot_steps: Vec<u64>,
}

impl RunRecorder {
    fn keep_record(cfg: &TrainConfig, it: u64) -> bool {
        (cfg.record_every > 0 && it % cfg.record_every == 0)
            || cfg.record_window.is_some_and(|(lo, hi)| it >= lo && it <= hi)
    }
}

impl TrainHook for RunRecorder {
    fn on_step(&mut self, trainer: &Trainer, record: &StepRecord) -> Result<()> {
        if Self::keep_record(trainer.config(), record.iteration) {
            if let Some(w) = self.writer.as_mut() {
                w.write(record)?;
            }
        }
        Ok(())
    }

    fn on_snapshot(&mut self, trainer: &Trainer, _q: &QTable) -> Result<()> {
        let step = trainer.step();
        if self.snapshot_steps.binary_search(&step).is_ok() {
            trainer.online().save_json(&params_file(&self.dir, "online", step))?;
            if trainer.target() != trainer.online() {
                trainer.target().save_json(&params_file(&self.dir, "target", step))?;
            }
        }
        Ok(())
    }
}

/// Trains one seed into `dir`. The marker file stays behind, holding the
/// error, if the run does not finish.
pub fn train_run(cfg: &TrainConfig, dir: &Path) -> Result<()> {
    cfg.validate()?;
    create_dir(&dir.join(PARAMS_DIR))?;
    let manifest = RunManifest::new(cfg);
    write_text(&dir.join(MANIFEST_FILE), &serde_json::to_string_pretty(&manifest)?)?;
    write_text(&dir.join(CONFIG_FILE), &manifest.config)?;
    let marker = dir.join(INCOMPLETE_MARKER);
    write_text(&marker, "training in progress\n")?;

    let result = (|| -> Result<()> {
        let mut recorder = RunRecorder {
            dir: dir.to_path_buf(),
            writer: Some(RecordWriter::create(dir)?),
            snapshot_steps: expected_snapshot_steps(cfg),
        };
        let art = run_training(cfg, &mut [&mut recorder])?;
        if let Some(w) = recorder.writer.take() {
            w.finish()?;
        }
        art.q_opt.write_csv(&dir.join(Q_STAR_FILE))?;
        art.metrics.write_csv(&dir.join(METRICS_FILE))?;
        art.metrics.write_q_trajectory(&dir.join(Q_TRAJECTORY_FILE))?;
        art.final_params.save_json(&dir.join(FINAL_PARAMS_FILE))?;
        let mut visits = String::from("state,label,count\n");
        for (s, c) in art.visit_counts.iter().enumerate() {
            visits.push_str(&format!("{s},\"{}\",{c}\n", cfg.env.state_label(StateId(s))));
        }
        write_text(&dir.join(VISITS_FILE), &visits)
    })();

    match result {
        Ok(()) => fs::remove_file(&marker).map_err(io_err(&marker)),
        Err(e) => {
            let _ = fs::write(&marker, format!("{e}\n"));
            Err(e)
        }
    }
}

/// One run directory per seed; seeds are independent and may run
/// concurrently.
pub fn cmd_train(cfg: &TrainConfig, seeds: &[u64], out_dir: &Path, par: Parallelism) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(contract("no seeds given"));
    }
    create_dir(out_dir)?;
    let results = map_slice(par, seeds, |&seed| {
        let dir = seed_dir(out_dir, seed);
        train_run(&TrainConfig { seed, ..cfg.clone() }, &dir).map(|_| dir)
    });
    results.into_iter().collect()
}

/// A finished run loaded back from disk.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
    pub manifest: RunManifest,
    pub config: TrainConfig,
}

impl RunDir {
    pub fn open(path: &Path) -> Result<Self> {
        let manifest = RunManifest::load(&path.join(MANIFEST_FILE))?;
        let config = manifest.train_config()?;
        Ok(RunDir { path: path.to_path_buf(), manifest, config })
    }

    pub fn is_complete(&self) -> bool {
        !self.path.join(INCOMPLETE_MARKER).exists()
    }

    pub fn q_star(&self) -> Result<QTable> {
        QTable::read_csv(&self.path.join(Q_STAR_FILE))
    }

    pub fn online_params(&self, step: u64) -> Result<NetworkParams> {
        NetworkParams::load_json(&params_file(&self.path, "online", step))
    }

    /// The target network at `step`; equal to the online one when no
    /// separate file was written.
    pub fn target_params(&self, step: u64) -> Result<NetworkParams> {
        let p = params_file(&self.path, "target", step);
        if p.exists() {
            NetworkParams::load_json(&p)
        } else {
            self.online_params(step)
        }
    }

    pub fn visit_counts(&self) -> Result<Vec<u64>> {
        let path = self.path.join(VISITS_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        text.lines()
            .skip(1)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.rsplit(',')
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Parse { path: path.clone(), reason: format!("bad row `{l}`") })
            })
            .collect()
    }
}

/// What `cmd_diagnose` produced.
#[derive(Debug, Clone)]
pub struct DiagnoseSummary {
    pub ntk_steps: Vec<u64>,
    pub td_rows: usize,
    pub cases: Vec<((StateId, ActionId), CaseSummary)>,
}

const DECOMPOSITION_ALPHAS: [f64; 2] = [1e-4, 5e-5];
const TOP_VISITED: usize = 35;

/// NTK matrices at the parameter snapshots inside `window` (the final one
/// without a window), TD-error stream, visit ranking, update-decomposition
/// checks and per-pair case partitions.
pub fn cmd_diagnose(
    run_dir: &Path,
    tracked: &[(StateId, ActionId)],
    window: Option<(u64, u64)>,
    out_dir: &Path,
) -> Result<DiagnoseSummary> {
    let run = RunDir::open(run_dir)?;
    let cfg = &run.config;
    let env = cfg.env;
    for &(s, a) in tracked {
        if !cfg.tracked.contains(&(s, a)) {
            return Err(contract(format!(
                "pair {}:{} was not tracked during training",
                env.state_label(s),
                env.action_label(a)
            )));
        }
    }

    let expected = expected_snapshot_steps(cfg);
    let wanted: Vec<u64> = match window {
        Some((lo, hi)) => expected.iter().copied().filter(|&t| t >= lo && t <= hi).collect(),
        None => expected.last().copied().into_iter().collect(),
    };
    let missing: Vec<u64> =
        wanted.iter().copied().filter(|&t| !params_file(&run.path, "online", t).exists()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingSnapshots { dir: run.path.join(PARAMS_DIR), steps: missing });
    }

    create_dir(out_dir)?;
    let records = records::read_records(&run.path, window)?;
    let index = PairIndex::for_env(&env);

    let mut ntk_summary = String::from("step,diagonal_dominance,min_diagonal\n");
    let mut decomposition = String::from("step,alpha,abs_error,rel_error,halvings\n");
    for &step in &wanted {
        let params = run.online_params(step)?;
        let k = ntk(&params, index, &env)?;
        k.write_csv(&out_dir.join(format!("ntk_{step}.csv")))?;
        let min_diag = (0..k.dim()).map(|i| k.get(i, i)).fold(f64::INFINITY, f64::min);
        ntk_summary.push_str(&format!("{step},{},{min_diag}\n", k.diagonal_dominance()));

        if let Some(rec) = records.iter().find(|r| r.iteration == step && !r.batch.is_empty()) {
            let target = run.target_params(step)?;
            let batch = TdBatch::from_record(rec, &params, &target, &env, cfg.gamma, cfg.double_q)?;
            match decomposition_check(&params, &batch, &DECOMPOSITION_ALPHAS, &env) {
                Ok(r) => {
                    for row in &r.rows {
                        decomposition.push_str(&format!(
                            "{step},{},{},{},{}\n",
                            row.alpha, row.abs_error, row.rel_error, r.halvings
                        ));
                    }
                }
                Err(Error::KinkCrossing { halvings, .. }) => {
                    decomposition.push_str(&format!("{step},,,,{halvings}\n"));
                }
                Err(e) => return Err(e),
            }
        }
    }
    write_text(&out_dir.join("ntk_summary.csv"), &ntk_summary)?;
    write_text(&out_dir.join("decomposition.csv"), &decomposition)?;

    let stream = td_stream(&records);
    write_td_stream_csv(&stream, &out_dir.join("td_stream.csv"))?;

    let mut top = String::from("rank,state,label,count,fraction\n");
    for (rank, row) in visit_histogram_from_counts(&run.visit_counts()?, TOP_VISITED).iter().enumerate() {
        top.push_str(&format!(
            "{},{},\"{}\",{},{}\n",
            rank + 1,
            row.state.0,
            env.state_label(row.state),
            row.count,
            row.fraction
        ));
    }
    write_text(&out_dir.join("top_visited.csv"), &top)?;

    let mut cases = Vec::new();
    let mut summary = String::from("state,action,label,count,mean_dq\n");
    for &pair in tracked {
        let s = case_averages(&records, pair, cfg.case_binding)?;
        write_cases_csv(&s.rows, &out_dir.join(format!("cases_{}_{}.csv", pair.0 .0, pair.1 .0)))?;
        for label in CaseLabel::ALL {
            let mean = s.mean(label).map_or(String::new(), |m| m.to_string());
            summary.push_str(&format!("{},{},{label},{},{mean}\n", pair.0 .0, pair.1 .0, s.count(label)));
        }
        cases.push((pair, s));
    }
    write_text(&out_dir.join("cases_summary.csv"), &summary)?;

    Ok(DiagnoseSummary { ntk_steps: wanted, td_rows: stream.len(), cases })
}
