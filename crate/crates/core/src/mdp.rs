//! Finite-MDP machinery: enumerated transition models, Q tables, the Bellman
//! optimality operator, value iteration and tabular Q-learning.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, io_err, Error, Result};
use crate::par::{self, Parallelism};

/// Index of a state in an environment's enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId(pub usize);

/// Index of an action; the action set is fixed per environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One possible result of taking an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: StateId,
    pub prob: f64,
    pub reward: f64,
}

/// Discount factor, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Discount(f64);

impl Discount {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma < 1.0 {
            Ok(Discount(gamma))
        } else {
            Err(contract(format!("discount must lie in (0,1), got {gamma}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

const ROW_SUM_TOL: f64 = 1e-12;

/// Exact dynamics of a finite MDP.
///
/// Outcome lists are canonical: sorted by successor id with duplicate
/// successors merged.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<Outcome>>,
}

impl TransitionModel {
    /// Builds a model from `rows[s * n_actions + a]`, canonicalizing each row.
    pub fn new(n_states: usize, n_actions: usize, rows: Vec<Vec<Outcome>>) -> Result<Self> {
        if rows.len() != n_states * n_actions {
            return Err(contract(format!(
                "expected {} transition rows, got {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        let rows = rows.into_iter().map(canonicalize).collect::<Vec<_>>();
        for (i, row) in rows.iter().enumerate() {
            let mut total = 0.0;
            for o in row {
                if o.next.0 >= n_states {
                    return Err(contract(format!("row {i}: successor {} out of range", o.next)));
                }
                if !(o.prob >= 0.0) || !o.reward.is_finite() {
                    return Err(contract(format!("row {i}: invalid outcome {o:?}")));
                }
                total += o.prob;
            }
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(contract(format!("row {i}: probabilities sum to {total}")));
            }
        }
        Ok(TransitionModel { n_states, n_actions, rows })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn outcomes(&self, s: StateId, a: ActionId) -> &[Outcome] {
        &self.rows[s.0 * self.n_actions + a.0]
    }

    /// Expected immediate reward of `(s, a)`.
    pub fn expected_reward(&self, s: StateId, a: ActionId) -> f64 {
        self.outcomes(s, a).iter().map(|o| o.prob * o.reward).sum()
    }

    /// True when every outcome of every pair carries the same reward, i.e. the
    /// reward is a function of `(s, a)` alone.
    pub fn reward_is_state_action(&self) -> bool {
        self.rows.iter().all(|row| row.windows(2).all(|w| w[0].reward == w[1].reward))
    }
}

/// Sorts outcomes by successor and merges duplicates (probability-weighted
/// reward when duplicate rewards differ).
pub(crate) fn canonicalize(mut row: Vec<Outcome>) -> Vec<Outcome> {
    row.retain(|o| o.prob > 0.0);
    row.sort_by_key(|o| o.next);
    let mut out: Vec<Outcome> = Vec::with_capacity(row.len());
    for o in row {
        match out.last_mut() {
            Some(last) if last.next == o.next => {
                let p = last.prob + o.prob;
                if last.reward != o.reward {
                    last.reward = (last.prob * last.reward + o.prob * o.reward) / p;
                }
                last.prob = p;
            }
            _ => out.push(o),
        }
    }
    out
}

/// Dense `n_states x n_actions` table of action values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn filled(n_states: usize, n_actions: usize, v: f64) -> Self {
        QTable { n_states, n_actions, values: vec![v; n_states * n_actions] }
    }

    /// Wraps row-major values; every entry must be finite.
    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(contract(format!(
                "Q table of shape {n_states}x{n_actions} needs {} values, got {}",
                n_states * n_actions,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(contract(format!("non-finite Q value at flat index {i}")));
        }
        Ok(QTable { n_states, n_actions, values })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.values[s.0 * self.n_actions + a.0]
    }

    pub fn set(&mut self, s: StateId, a: ActionId, v: f64) {
        self.values[s.0 * self.n_actions + a.0] = v;
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.values[s.0 * self.n_actions..(s.0 + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: StateId) -> &mut [f64] {
        &mut self.values[s.0 * self.n_actions..(s.0 + 1) * self.n_actions]
    }

    /// Row-major values, indexed by `state * n_actions + action`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_row(&self, s: StateId) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_shape(&self, other: &QTable) -> Result<()> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(contract(format!(
                "Q table shapes differ: {}x{} vs {}x{}",
                self.n_states, self.n_actions, other.n_states, other.n_actions
            )));
        }
        Ok(())
    }

    /// Max-norm of `self - other`.
    pub fn max_abs_diff(&self, other: &QTable) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Writes `state,action,q` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
        let mut body = String::from("state,action,q\n");
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                body.push_str(&format!("{s},{a},{}\n", self.values[s * self.n_actions + a]));
            }
        }
        w.write_all(body.as_bytes()).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))
    }

    /// Reads a table previously written by [`QTable::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let bad = |reason: String| Error::Parse { path: path.to_path_buf(), reason };
        let mut lines = text.lines();
        if lines.next() != Some("state,action,q") {
            return Err(bad("missing `state,action,q` header".into()));
        }
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let parse = || -> Option<(usize, usize, f64)> {
                Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?))
            };
            entries.push(parse().ok_or_else(|| bad(format!("line {}: `{line}`", n + 2)))?);
        }
        let n_states = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let n_actions = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
        if entries.len() != n_states * n_actions {
            return Err(bad("table is not dense".into()));
        }
        let mut q = QTable::zeros(n_states, n_actions);
        for (s, a, v) in entries {
            q.set(StateId(s), ActionId(a), v);
        }
        Ok(q)
    }
}

fn check_dims(model: &TransitionModel, q: &QTable) -> Result<()> {
    if q.n_states != model.n_states || q.n_actions != model.n_actions {
        return Err(contract(format!(
            "Q table is {}x{} but the model is {}x{}",
            q.n_states, q.n_actions, model.n_states, model.n_actions
        )));
    }
    Ok(())
}

/// One application of the Bellman optimality operator:
/// `out(s,a) = sum_{s'} P(s,a,s') * (r + gamma * max_a' q(s',a'))`.
pub fn bellman_backup(model: &TransitionModel, q: &QTable, gamma: Discount) -> Result<QTable> {
    bellman_backup_with(model, q, gamma, Parallelism::None)
}

pub fn bellman_backup_with(
    model: &TransitionModel,
    q: &QTable,
    gamma: Discount,
    par: Parallelism,
) -> Result<QTable> {
    check_dims(model, q)?;
    let g = gamma.get();
    let state_max: Vec<f64> = (0..q.n_states).map(|s| q.max_row(StateId(s))).collect();
    let mut out = QTable::zeros(q.n_states, q.n_actions);
    let na = q.n_actions;
    par::for_each_chunk(par, &mut out.values, na, |s, row| {
        for (a, slot) in row.iter_mut().enumerate() {
            *slot = model
                .outcomes(StateId(s), ActionId(a))
                .iter()
                .map(|o| o.prob * (o.reward + g * state_max[o.next.0]))
                .sum();
        }
    });
    Ok(out)
}

/// Result of a converged value iteration.
#[derive(Debug, Clone)]
pub struct Solution {
    pub q: QTable,
    pub iterations: usize,
    /// `||T*Q - Q||_inf` of the last sweep.
    pub residual: f64,
}

/// Iterates `Q <- T*Q` from the zero table until the sup-norm change drops to
/// `tol`.
pub fn value_iteration(
    model: &TransitionModel,
    gamma: Discount,
    tol: f64,
    max_iter: usize,
) -> Result<Solution> {
    value_iteration_with(model, gamma, tol, max_iter, Parallelism::None)
}

pub fn value_iteration_with(
    model: &TransitionModel,
    gamma: Discount,
    tol: f64,
    max_iter: usize,
    par: Parallelism,
) -> Result<Solution> {
    if !(tol > 0.0) {
        return Err(contract(format!("tolerance must be positive, got {tol}")));
    }
    let mut q = QTable::zeros(model.n_states, model.n_actions);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = bellman_backup_with(model, &q, gamma, par)?;
        residual = next.max_abs_diff(&q)?;
        q = next;
        if residual <= tol {
            return Ok(Solution { q, iterations: it, residual });
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

/// Default tolerance used when collecting argmax sets.
pub const ARGMAX_TOL: f64 = 1e-6;

/// Greedy actions of a Q table.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPolicy {
    /// Lowest-index maximizer per state.
    pub actions: Vec<ActionId>,
    /// All actions within tolerance of each state's maximum.
    pub argmax_sets: Vec<Vec<ActionId>>,
}

impl GreedyPolicy {
    pub fn action(&self, s: StateId) -> ActionId {
        self.actions[s.0]
    }

    pub fn is_optimal(&self, s: StateId, a: ActionId) -> bool {
        self.argmax_sets[s.0].contains(&a)
    }
}

pub fn greedy_policy(q: &QTable) -> GreedyPolicy {
    greedy_policy_with_tol(q, ARGMAX_TOL)
}

/// Argmax per state. An action joins the argmax set when it is within
/// `tol * max(1, |max|)` of the row maximum.
pub fn greedy_policy_with_tol(q: &QTable, tol: f64) -> GreedyPolicy {
    let mut actions = Vec::with_capacity(q.n_states);
    let mut argmax_sets = Vec::with_capacity(q.n_states);
    for s in 0..q.n_states {
        let row = q.row(StateId(s));
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = tol * best.abs().max(1.0);
        let set: Vec<ActionId> =
            (0..row.len()).filter(|&a| row[a] >= best - slack).map(ActionId).collect();
        actions.push(set[0]);
        argmax_sets.push(set);
    }
    GreedyPolicy { actions, argmax_sets }
}

/// Lowest index among exact maximizers of `row`.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Expected TD-error `(T*Q - Q)(s,a)` for every pair, in pair-index order.
pub fn expected_td(model: &TransitionModel, q: &QTable, gamma: Discount) -> Result<Vec<f64>> {
    let t = bellman_backup(model, q, gamma)?;
    Ok(t.values.iter().zip(&q.values).map(|(a, b)| a - b).collect())
}

/// One tabular Q-learning update on `(s, a)`; every other entry is kept.
pub fn tabular_q_step(
    q: &QTable,
    s: StateId,
    a: ActionId,
    reward: f64,
    s_next: StateId,
    alpha: f64,
    gamma: Discount,
) -> QTable {
    let mut out = q.clone();
    let target = reward + gamma.get() * q.max_row(s_next);
    let old = q.get(s, a);
    out.set(s, a, (1.0 - alpha) * old + alpha * target);
    out
}

/// Euclidean norm of `q - q_opt` over all pairs.
pub fn q_distance(q: &QTable, q_opt: &QTable) -> Result<f64> {
    q.check_shape(q_opt)?;
    Ok(q.values.iter().zip(&q_opt.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Per-state spread `max_a q - min_a q`.
pub fn q_gap(q: &QTable) -> Vec<f64> {
    (0..q.n_states)
        .map(|s| {
            let row = q.row(StateId(s));
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect()
}
