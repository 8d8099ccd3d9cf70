use std::path::Path;

use crate::env::Env;
use crate::error::{contract, io_err, Result};
use crate::mdp::{q_gap, QTable, StateId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateGap {
    pub state: StateId,
    pub gap: f64,
    /// `gap / |mean_a Q(s,a)|`.
    pub normalized: f64,
}

/// Optimal-action spread over the non-absorbing states of one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvGap {
    pub env: Env,
    pub states: Vec<StateGap>,
    pub median_gap: f64,
    pub median_normalized: f64,
}

impl EnvGap {
    pub fn new(env: &Env, q_opt: &QTable) -> Result<Self> {
        if q_opt.n_states() != env.n_states() || q_opt.n_actions() != env.n_actions() {
            return Err(contract("Q table does not match the environment"));
        }
        let gaps = q_gap(q_opt);
        let states: Vec<StateGap> = (0..env.n_states())
            .map(StateId)
            .filter(|&s| !env.is_absorbing(s))
            .map(|s| {
                let row = q_opt.row(s);
                let mean = row.iter().sum::<f64>() / row.len() as f64;
                let gap = gaps[s.0];
                StateGap { state: s, gap, normalized: if mean == 0.0 { f64::INFINITY } else { gap / mean.abs() } }
            })
            .collect();
        Ok(EnvGap {
            env: *env,
            median_gap: median(states.iter().map(|g| g.gap).collect()),
            median_normalized: median(states.iter().map(|g| g.normalized).collect()),
            states,
        })
    }

    pub fn get(&self, s: StateId) -> Option<&StateGap> {
        self.states.iter().find(|g| g.state == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub frozen_lake: EnvGap,
    pub traffic_light: EnvGap,
}

impl GapReport {
    /// FrozenLake median normalized gap over TrafficLight's.
    pub fn ratio(&self) -> f64 {
        self.frozen_lake.median_normalized / self.traffic_light.median_normalized
    }

    /// `env,state,label,gap,normalized` followed by per-environment medians.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        write_env_rows(&mut s, &[&self.frozen_lake, &self.traffic_light]);
        s.push_str(&format!("ratio,,,,{}\n", self.ratio()));
        std::fs::write(path, s).map_err(io_err(path))
    }
}

/// Gap table for a single environment, in the same schema.
pub fn write_env_gap_csv(gap: &EnvGap, path: &Path) -> Result<()> {
    let mut s = String::new();
    write_env_rows(&mut s, &[gap]);
    std::fs::write(path, s).map_err(io_err(path))
}

fn write_env_rows(s: &mut String, gaps: &[&EnvGap]) {
    s.push_str("env,state,label,gap,normalized\n");
    for g in gaps {
        let name = g.env.kind().as_str();
        for st in &g.states {
            s.push_str(&format!("{name},{},\"{}\",{},{}\n", st.state.0, g.env.state_label(st.state), st.gap, st.normalized));
        }
        s.push_str(&format!("{name},median,,{},{}\n", g.median_gap, g.median_normalized));
    }
}

pub fn gap_report(fl: (&Env, &QTable), tl: (&Env, &QTable)) -> Result<GapReport> {
    Ok(GapReport { frozen_lake: EnvGap::new(fl.0, fl.1)?, traffic_light: EnvGap::new(tl.0, tl.1)? })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
