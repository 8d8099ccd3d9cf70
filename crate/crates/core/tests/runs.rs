use std::fs;
use std::path::{Path, PathBuf};

use dqlab::dqn::TrainConfig;
use dqlab::env::{Env, TrafficParams};
use dqlab::metrics::MetricsLog;
use dqlab::mdp::{ActionId, QTable};
use dqlab::par::Parallelism;
use dqlab::report::cmd_report;
use dqlab::runner::{
    cmd_diagnose, cmd_solve, cmd_train, params_file, RunDir, INCOMPLETE_MARKER, METRICS_FILE, Q_STAR_FILE,
};
use dqlab::Error;

fn small_traffic() -> TrainConfig {
    let env = Env::traffic_light(TrafficParams { q_max: 2, ..TrafficParams::default() }).unwrap();
    let s = env.parse_state("(0,2,0)").unwrap();
    TrainConfig {
        total_steps: 3000,
        snapshot_every: 500,
        param_snapshot_every: 1000,
        record_every: 50,
        record_window: Some((2000, 2200)),
        tracked: vec![(s, ActionId(0))],
        hidden: 16,
        ..TrainConfig::for_env(env)
    }
}

fn train(cfg: &TrainConfig, seeds: &[u64], out: &Path) -> Vec<PathBuf> {
    cmd_train(cfg, seeds, out, Parallelism::None).unwrap()
}

#[test]
fn solve_writes_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let sol = cmd_solve(&Env::frozen_lake(), 0.99, dir.path()).unwrap();
    let back = QTable::read_csv(&dir.path().join(Q_STAR_FILE)).unwrap();
    assert_eq!(back, sol.q);
    for f in ["states.csv", "policy.csv", "gap_report.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn manifest_reproduces_the_run_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_traffic();
    let first = train(&cfg, &[4], &dir.path().join("a"));
    let run = RunDir::open(&first[0]).unwrap();
    assert!(run.is_complete());
    assert_eq!(run.config, TrainConfig { seed: 4, ..cfg });
    let again = train(&run.config, &[run.config.seed], &dir.path().join("b"));
    let read = |d: &Path| fs::read_to_string(d.join(METRICS_FILE)).unwrap();
    assert_eq!(read(&first[0]), read(&again[0]));
    assert_eq!(run.online_params(3000).unwrap(), RunDir::open(&again[0]).unwrap().online_params(3000).unwrap());
}

#[test]
fn zero_steps_still_leave_a_complete_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { total_steps: 0, ..small_traffic() };
    let runs = train(&cfg, &[0], dir.path());
    let run = RunDir::open(&runs[0]).unwrap();
    assert!(run.is_complete());
    let metrics = MetricsLog::read_csv(&runs[0].join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.iterations("q_distance"), vec![0]);
    assert!(run.visit_counts().unwrap().iter().all(|&c| c == 0));
}

#[test]
fn diagnose_covers_the_window() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_traffic();
    let runs = train(&cfg, &[1], &dir.path().join("runs"));
    let out = dir.path().join("diag");
    let summary = cmd_diagnose(&runs[0], &cfg.tracked, Some((2000, 2200)), &out).unwrap();
    assert_eq!(summary.ntk_steps, vec![2000]);
    assert_eq!(summary.td_rows, 201 * cfg.batch_size);
    assert_eq!(summary.cases[0].1.total(), 201);
    for f in ["ntk_2000.csv", "ntk_summary.csv", "decomposition.csv", "td_stream.csv", "top_visited.csv", "cases_summary.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn diagnose_names_missing_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_traffic();
    let runs = train(&cfg, &[2], dir.path());
    fs::remove_file(params_file(&runs[0], "online", 2000)).unwrap();
    match cmd_diagnose(&runs[0], &[], Some((1000, 3000)), &dir.path().join("d")) {
        Err(Error::MissingSnapshots { steps, .. }) => assert_eq!(steps, vec![2000]),
        other => panic!("expected missing snapshots, got {other:?}"),
    }
}

#[test]
fn diagnose_rejects_untracked_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_traffic();
    let runs = train(&cfg, &[2], dir.path());
    let env = cfg.env;
    let other = (env.parse_state("(1,1,1)").unwrap(), ActionId(1));
    assert!(cmd_diagnose(&runs[0], &[other], None, &dir.path().join("d")).is_err());
}

#[test]
fn report_writes_every_chart_with_its_data() {
    let dir = tempfile::tempdir().unwrap();
    let runs = train(&small_traffic(), &[0, 1], &dir.path().join("runs"));
    let files = cmd_report(&runs, &dir.path().join("report")).unwrap();
    let svgs = files.iter().filter(|f| f.extension().is_some_and(|e| e == "svg")).count();
    let csvs = files.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")).count();
    assert!(svgs >= 6 && csvs >= svgs, "{files:?}");
    for f in &files {
        assert!(fs::metadata(f).unwrap().len() > 0, "{}", f.display());
    }
}

#[test]
fn report_refuses_mixed_environments() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = train(&small_traffic(), &[0], &dir.path().join("tl"));
    let fl = TrainConfig { total_steps: 1500, hidden: 8, ..TrainConfig::for_env(Env::frozen_lake()) };
    runs.extend(train(&fl, &[0], &dir.path().join("fl")));
    let err = cmd_report(&runs, &dir.path().join("report")).unwrap_err();
    assert!(err.to_string().contains("different environments"), "{err}");
}

#[test]
fn report_refuses_unfinished_runs() {
    let dir = tempfile::tempdir().unwrap();
    let runs = train(&small_traffic(), &[0], dir.path());
    fs::write(runs[0].join(INCOMPLETE_MARKER), "interrupted\n").unwrap();
    assert!(cmd_report(&runs, &dir.path().join("report")).is_err());
}
