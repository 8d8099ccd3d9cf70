//! Read-only analyses over network snapshots and step records.

mod cases;
mod decomposition;
mod gap;
mod ntk;
mod stream;

pub use cases::{case_averages, classify_case, write_cases_csv, CaseLabel, CaseRow, CaseSummary};
pub use decomposition::{
    decomposition_check, decomposition_predict, decomposition_predict_with, kink_crossing, BatchDistribution,
    CheckReport, CheckRow, Kernel, TdBatch, Transition,
};
pub use gap::{gap_report, write_env_gap_csv, EnvGap, GapReport, StateGap};
pub use ntk::{gradient_matrix, ntk, ntk_with, NtkMatrix};
pub use stream::{td_stream, visit_histogram, visit_histogram_from_counts, write_td_stream_csv, TdRow, VisitRow};

use crate::env::Env;
use crate::mdp::{ActionId, QTable, StateId};
use crate::nn::NetworkParams;

/// Enumeration of every `(state, action)` pair, row-major by state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    n_states: usize,
    n_actions: usize,
}

impl PairIndex {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        PairIndex { n_states, n_actions }
    }

    pub fn for_env(env: &Env) -> Self {
        PairIndex::new(env.n_states(), env.n_actions())
    }

    pub fn len(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn index(&self, s: StateId, a: ActionId) -> usize {
        debug_assert!(s.0 < self.n_states && a.0 < self.n_actions);
        s.0 * self.n_actions + a.0
    }

    pub fn pair(&self, i: usize) -> (StateId, ActionId) {
        (StateId(i / self.n_actions), ActionId(i % self.n_actions))
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, ActionId)> + '_ {
        (0..self.len()).map(|i| self.pair(i))
    }
}

/// Network evaluated on the encoding of every state.
pub fn q_snapshot(params: &NetworkParams, env: &Env) -> QTable {
    let mut act = params.activations();
    let mut obs = vec![0.0; env.obs_dim()];
    let mut values = Vec::with_capacity(env.n_pairs());
    for s in 0..env.n_states() {
        env.encode_into(StateId(s), &mut obs);
        params.forward_into(&obs, &mut act);
        values.extend_from_slice(act.q());
    }
    QTable::from_values(env.n_states(), env.n_actions(), values).expect("network output is finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;

    #[test]
    fn pair_index_layout() {
        let idx = PairIndex::for_env(&Env::frozen_lake());
        assert_eq!(idx.len(), 64);
        assert_eq!(idx.index(StateId(3), ActionId(2)), 14);
        assert_eq!(idx.pair(14), (StateId(3), ActionId(2)));
        let tl = PairIndex::for_env(&Env::traffic_light(Default::default()).unwrap());
        assert_eq!(tl.len(), 288);
        assert!(tl.iter().enumerate().all(|(i, (s, a))| tl.index(s, a) == i));
    }

    #[test]
    fn snapshot_of_zero_and_shifted_networks() {
        let env = Env::frozen_lake();
        let arch = Architecture::new(env.obs_dim(), env.n_actions());
        let mut p = NetworkParams::zeros(arch);
        assert!(q_snapshot(&p, &env).values().iter().all(|&v| v == 0.0));
        let base = NetworkParams::init(arch, 3);
        let q0 = q_snapshot(&base, &env);
        p = base.clone();
        p.flat_mut()[arch.value_bias_index()] += 2.5;
        let q1 = q_snapshot(&p, &env);
        for (a, b) in q0.values().iter().zip(q1.values()) {
            assert!((b - a - 2.5).abs() < 1e-12);
        }
    }
}
