//! Charts over one or more finished runs. Each chart is written next to a
//! CSV holding exactly the plotted numbers.

pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::diagnostics::{case_averages, visit_histogram_from_counts, CaseLabel};
use crate::error::{contract, io_err, Result};
use crate::mdp::{ActionId, QTable, StateId};
use crate::metrics::MetricsLog;
use crate::runner::records::read_records;
use crate::runner::{RunDir, METRICS_FILE, Q_TRAJECTORY_FILE};
use svg::{ramp, Plot, PALETTE};

/// Scatter charts keep every k-th point so at most this many remain.
pub const MAX_SCATTER_POINTS: usize = 4000;
pub const TOP_K_VISITS: usize = 35;
pub const BAR_STATES: usize = 10;
pub const TRAJECTORY_STATES: usize = 4;

/// Every `k`-th element, `k` chosen so at most `max` remain.
pub fn downsample<T: Clone>(items: &[T], max: usize) -> Vec<T> {
    if items.len() <= max || max == 0 {
        return items.to_vec();
    }
    let k = items.len().div_ceil(max);
    items.iter().step_by(k).cloned().collect()
}

struct Loaded {
    run: RunDir,
    metrics: MetricsLog,
    trajectory: Vec<(u64, QTable)>,
    visits: Vec<u64>,
}

fn write(path: &Path, text: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))?;
    out.push(path.to_path_buf());
    Ok(())
}

/// Writes charts (a)-(f) and their CSVs into `out_dir`; returns the files.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if run_dirs.is_empty() {
        return Err(contract("no run directories given"));
    }
    let mut runs = Vec::new();
    for d in run_dirs {
        let run = RunDir::open(d)?;
        if !run.is_complete() {
            return Err(contract(format!("{} is an unfinished run", d.display())));
        }
        runs.push(Loaded {
            metrics: MetricsLog::read_csv(&d.join(METRICS_FILE))?,
            trajectory: MetricsLog::read_q_trajectory(&d.join(Q_TRAJECTORY_FILE))?,
            visits: run.visit_counts()?,
            run,
        });
    }
    let env = runs[0].run.config.env;
    if let Some(other) = runs.iter().find(|r| r.run.config.env != env) {
        return Err(contract(format!(
            "refusing to aggregate runs from different environments ({} vs {})",
            runs[0].run.path.display(),
            other.run.path.display()
        )));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let q_opt = runs[0].run.q_star()?;
    let mut out = Vec::new();

    chart_distance(&runs, out_dir, &mut out)?;

    let mut total_visits = vec![0u64; env.n_states()];
    for r in &runs {
        for (t, v) in total_visits.iter_mut().zip(&r.visits) {
            *t += v;
        }
    }
    let ranked: Vec<StateId> = visit_histogram_from_counts(&total_visits, env.n_states())
        .into_iter()
        .map(|v| v.state)
        .filter(|&s| !env.is_absorbing(s))
        .collect();

    chart_trajectories(&runs[0], &q_opt, &ranked, out_dir, &mut out)?;
    chart_td_scatter(&runs[0], out_dir, &mut out)?;
    chart_visits(&runs[0], &total_visits, out_dir, &mut out)?;
    chart_bars(&runs, &q_opt, &ranked, out_dir, &mut out)?;
    chart_cases(&runs[0], out_dir, &mut out)?;
    Ok(out)
}

/// (a) mean and min/max band of `||Q - Q*||` across runs.
fn chart_distance(runs: &[Loaded], dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let series: Vec<Vec<(u64, f64)>> = runs.iter().map(|r| r.metrics.series("q_distance")).collect();
    let n = series.iter().map(Vec::len).min().unwrap_or(0);
    let mut csv = String::from("iteration,mean,min,max,runs\n");
    let (mut mean, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let it = series[0][i].0;
        let vals: Vec<f64> = series.iter().map(|s| s[i].1).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let a = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let b = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(csv, "{it},{m},{a},{b},{}", vals.len());
        mean.push((it as f64, m));
        lo.push((it as f64, a));
        hi.push((it as f64, b));
    }
    let mut p = Plot::new("Distance to optimal Q", "iteration", "||Q - Q*||");
    p.band(lo, hi, PALETTE[0]).line(mean, PALETTE[0]).legend("mean", PALETTE[0]).legend("min/max", "#a6c8e4");
    write(&dir.join("chart_a_distance.csv"), &csv, out)?;
    write(&dir.join("chart_a_distance.svg"), &p.render(), out)
}

/// (b) learned Q of the most trained states against their optimal values.
fn chart_trajectories(run: &Loaded, q_opt: &QTable, ranked: &[StateId], dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let env = run.run.config.env;
    for &s in ranked.iter().take(TRAJECTORY_STATES) {
        let mut csv = String::from("iteration,state,action,q,q_opt\n");
        let mut p = Plot::new(&format!("Q values of state {}", env.state_label(s)), "iteration", "Q");
        let first = run.trajectory.first().map_or(0.0, |t| t.0 as f64);
        let last = run.trajectory.last().map_or(1.0, |t| t.0 as f64);
        for a in 0..env.n_actions() {
            let act = ActionId(a);
            let color = PALETTE[a % PALETTE.len()];
            let opt = q_opt.get(s, act);
            let pts: Vec<(f64, f64)> = run.trajectory.iter().map(|(it, q)| (*it as f64, q.get(s, act))).collect();
            for (it, q) in &run.trajectory {
                let _ = writeln!(csv, "{it},{},{a},{},{opt}", s.0, q.get(s, act));
            }
            p.line(pts, color).dashed(vec![(first, opt), (last, opt)], color).legend(env.action_label(act), color);
        }
        let stem = format!("chart_b_state_{}", s.0);
        write(&dir.join(format!("{stem}.csv")), &csv, out)?;
        write(&dir.join(format!("{stem}.svg")), &p.render(), out)?;
    }
    Ok(())
}

/// (c) in-batch TD-errors over time, colored by the state's visit count.
fn chart_td_scatter(run: &Loaded, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let records = read_records(&run.run.path, None)?;
    let rows: Vec<(u64, usize, usize, f64, u64)> = records
        .iter()
        .flat_map(|r| r.batch.iter().map(move |b| (r.iteration, b.state.0, b.action.0, b.delta, b.visits)))
        .collect();
    let rows = downsample(&rows, MAX_SCATTER_POINTS);
    let max_visits = rows.iter().map(|r| r.4).max().unwrap_or(1).max(1) as f64;
    let mut csv = String::from("iteration,state,action,delta,visits\n");
    let mut pts = Vec::with_capacity(rows.len());
    for &(it, s, a, d, v) in &rows {
        let _ = writeln!(csv, "{it},{s},{a},{d},{v}");
        pts.push((it as f64, d, ramp((1.0 + v as f64).ln() / (1.0 + max_visits).ln())));
    }
    let mut p = Plot::new("TD-error of trained pairs", "iteration", "TD-error");
    p.points(pts).legend("rarely visited", &ramp(0.0)).legend("often visited", &ramp(1.0));
    write(&dir.join("chart_c_td_errors.csv"), &csv, out)?;
    write(&dir.join("chart_c_td_errors.svg"), &p.render(), out)
}

/// (d) most trained states, summed over runs.
fn chart_visits(run: &Loaded, counts: &[u64], dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let env = run.run.config.env;
    let rows = visit_histogram_from_counts(counts, TOP_K_VISITS);
    let mut csv = String::from("rank,state,label,count,fraction\n");
    let mut p = Plot::new("Most visited states", "state", "fraction of training samples");
    let mut ticks = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(csv, "{},{},\"{}\",{},{}", i + 1, r.state.0, env.state_label(r.state), r.count, r.fraction);
        p.bar(i as f64 + 0.1, i as f64 + 0.9, r.fraction, PALETTE[0]);
        ticks.push((i as f64 + 0.5, env.state_label(r.state)));
    }
    p.x_ticks(ticks);
    write(&dir.join("chart_d_visits.csv"), &csv, out)?;
    write(&dir.join("chart_d_visits.svg"), &p.render(), out)
}

/// (e) final learned Q (mean with min/max over runs) next to the optimum.
fn chart_bars(runs: &[Loaded], q_opt: &QTable, ranked: &[StateId], dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let env = runs[0].run.config.env;
    let finals: Vec<&QTable> = runs.iter().filter_map(|r| r.trajectory.last().map(|t| &t.1)).collect();
    let mut csv = String::from("state,label,action,optimal,learned_mean,learned_min,learned_max\n");
    let mut p = Plot::new("Optimal and learned Q values", "state/action", "Q");
    let mut ticks = Vec::new();
    let n_actions = env.n_actions();
    for (i, &s) in ranked.iter().take(BAR_STATES).enumerate() {
        for a in 0..n_actions {
            let act = ActionId(a);
            let vals: Vec<f64> = finals.iter().map(|q| q.get(s, act)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let opt = q_opt.get(s, act);
            let _ = writeln!(csv, "{},\"{}\",{a},{opt},{mean},{lo},{hi}", s.0, env.state_label(s));
            let x = (i * n_actions + a) as f64;
            p.bar(x + 0.1, x + 0.5, opt, PALETTE[0]).bar(x + 0.5, x + 0.9, mean, PALETTE[1]);
            if vals.len() > 1 {
                p.error_bar(x + 0.7, lo, hi);
            }
            ticks.push((x + 0.5, format!("{} {}", env.state_label(s), env.action_label(act))));
        }
    }
    p.x_ticks(ticks).legend("optimal", PALETTE[0]).legend("learned", PALETTE[1]);
    write(&dir.join("chart_e_bars.csv"), &csv, out)?;
    write(&dir.join("chart_e_bars.svg"), &p.render(), out)
}

/// (f) per-iteration change of each tracked pair, colored by case, with the
/// per-case means.
fn chart_cases(run: &Loaded, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let cfg = &run.run.config;
    if cfg.tracked.is_empty() {
        return Ok(());
    }
    let records = read_records(&run.run.path, None)?;
    for &pair in &cfg.tracked {
        let summary = case_averages(&records, pair, cfg.case_binding)?;
        let rows = downsample(&summary.rows, MAX_SCATTER_POINTS);
        let mut csv = String::from("iteration,label,dq,label_mean\n");
        let mut p = Plot::new(
            &format!("Change of Q for {}:{}", cfg.env.state_label(pair.0), cfg.env.action_label(pair.1)),
            "iteration",
            "delta Q",
        );
        let color = |l: CaseLabel| PALETTE[l as usize];
        let mut pts = Vec::new();
        for r in &rows {
            let m = summary.mean(r.label).unwrap_or(f64::NAN);
            let _ = writeln!(csv, "{},{},{},{m}", r.iteration, r.label, r.dq);
            pts.push((r.iteration as f64, r.dq, color(r.label).to_string()));
        }
        let (x0, x1) = (rows.first().map_or(0.0, |r| r.iteration as f64), rows.last().map_or(1.0, |r| r.iteration as f64));
        p.points(pts);
        for l in CaseLabel::ALL {
            if let Some(m) = summary.mean(l) {
                p.dashed(vec![(x0, m), (x1, m)], color(l));
            }
            p.legend(l.as_str(), color(l));
        }
        let stem = format!("chart_f_cases_{}_{}", pair.0 .0, pair.1 .0);
        write(&dir.join(format!("{stem}.csv")), &csv, out)?;
        write(&dir.join(format!("{stem}.svg")), &p.render(), out)?;
    }
    Ok(())
}
