//! Long-format metric rows and wide Q-value trajectories.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{io_err, Error, Result};
use crate::mdp::QTable;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub iteration: u64,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    rows: Vec<MetricRow>,
    q_trajectory: Vec<(u64, QTable)>,
}

impl MetricsLog {
    /// Appends a row; iterations must strictly increase per metric.
    pub fn push(&mut self, iteration: u64, name: &str, value: f64) {
        debug_assert!(
            self.rows.iter().rev().find(|r| r.name == name).map_or(true, |r| r.iteration < iteration),
            "metric {name} not increasing at {iteration}"
        );
        self.rows.push(MetricRow { iteration, name: name.to_string(), value });
    }

    pub fn push_q(&mut self, iteration: u64, q: QTable) {
        self.q_trajectory.push((iteration, q));
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn q_trajectory(&self) -> &[(u64, QTable)] {
        &self.q_trajectory
    }

    pub fn series(&self, name: &str) -> Vec<(u64, f64)> {
        self.rows.iter().filter(|r| r.name == name).map(|r| (r.iteration, r.value)).collect()
    }

    pub fn iterations(&self, name: &str) -> Vec<u64> {
        self.series(name).into_iter().map(|(i, _)| i).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `iteration,metric,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("iteration,metric,value\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.iteration, r.name, r.value));
        }
        std::fs::write(path, s).map_err(io_err(path))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let bad = |reason: String| Error::Parse { path: path.to_path_buf(), reason };
        let mut lines = text.lines();
        if lines.next() != Some("iteration,metric,value") {
            return Err(bad("missing header".into()));
        }
        let mut log = MetricsLog::default();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad(format!("bad row `{line}`")));
            }
            let it = f[0].parse().map_err(|_| bad(format!("bad iteration in `{line}`")))?;
            let v = f[2].parse().map_err(|_| bad(format!("bad value in `{line}`")))?;
            log.rows.push(MetricRow { iteration: it, name: f[1].to_string(), value: v });
        }
        Ok(log)
    }

    /// Wide table: `iteration,q_<state>_<action>,...` one row per snapshot.
    pub fn write_q_trajectory(&self, path: &Path) -> Result<()> {
        let mut s = String::from("iteration");
        if let Some((_, q)) = self.q_trajectory.first() {
            for st in 0..q.n_states() {
                for a in 0..q.n_actions() {
                    s.push_str(&format!(",q_{st}_{a}"));
                }
            }
        }
        s.push('\n');
        for (it, q) in &self.q_trajectory {
            s.push_str(&it.to_string());
            for v in q.values() {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        std::fs::write(path, s).map_err(io_err(path))
    }

    pub fn read_q_trajectory(path: &Path) -> Result<Vec<(u64, QTable)>> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let bad = |reason: String| Error::Parse { path: path.to_path_buf(), reason };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let cols: Vec<(usize, usize)> = header
            .split(',')
            .skip(1)
            .map(|c| {
                let mut parts = c.trim_start_matches("q_").split('_');
                let s = parts.next().and_then(|x| x.parse().ok());
                let a = parts.next().and_then(|x| x.parse().ok());
                s.zip(a).ok_or_else(|| bad(format!("bad column `{c}`")))
            })
            .collect::<Result<_>>()?;
        let n_states = cols.iter().map(|c| c.0 + 1).max().unwrap_or(0);
        let n_actions = cols.iter().map(|c| c.1 + 1).max().unwrap_or(0);
        let mut out = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let mut f = line.split(',');
            let it = f.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad(format!("bad row `{line}`")))?;
            let vals: Vec<f64> =
                f.map(|x| x.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad(format!("bad row `{line}`")))?;
            out.push((it, QTable::from_values(n_states, n_actions, vals)?));
        }
        Ok(out)
    }

    /// Metric names present, sorted.
    pub fn names(&self) -> Vec<String> {
        let set: BTreeMap<&str, ()> = self.rows.iter().map(|r| (r.name.as_str(), ())).collect();
        set.keys().map(|s| s.to_string()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_csv() {
        let mut log = MetricsLog::default();
        log.push(0, "q_distance", 10.5);
        log.push(0, "epsilon", 1.0);
        log.push(500, "q_distance", 3.25);
        log.push_q(0, QTable::filled(2, 2, 1.5));
        log.push_q(500, QTable::from_values(2, 2, vec![0.1, 0.2, 0.3, -0.4]).unwrap());
        let dir = tempfile::tempdir().unwrap();
        log.write_csv(&dir.path().join("m.csv")).unwrap();
        log.write_q_trajectory(&dir.path().join("q.csv")).unwrap();
        let back = MetricsLog::read_csv(&dir.path().join("m.csv")).unwrap();
        assert_eq!(back.rows(), log.rows());
        assert_eq!(MetricsLog::read_q_trajectory(&dir.path().join("q.csv")).unwrap(), log.q_trajectory());
        assert_eq!(log.series("q_distance"), vec![(0, 10.5), (500, 3.25)]);
        assert_eq!(log.names(), vec!["epsilon".to_string(), "q_distance".to_string()]);
    }
}
