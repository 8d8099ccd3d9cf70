use std::path::Path;

use crate::dqn::StepRecord;
use crate::error::{io_err, Result};
use crate::mdp::{ActionId, StateId};

/// One in-batch TD-error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdRow {
    pub iteration: u64,
    pub state: StateId,
    pub action: ActionId,
    pub delta: f64,
    /// Cumulative training visits of `state` up to this iteration.
    pub visits: u64,
    /// The transition ended just before an environment reset.
    pub reset_flag: bool,
}

pub fn td_stream(records: &[StepRecord]) -> Vec<TdRow> {
    records
        .iter()
        .flat_map(|r| {
            r.batch.iter().map(move |b| TdRow {
                iteration: r.iteration,
                state: b.state,
                action: b.action,
                delta: b.delta,
                visits: b.visits,
                reset_flag: b.at_reset,
            })
        })
        .collect()
}

/// `iteration,state,action,delta,visits,reset_flag`.
pub fn write_td_stream_csv(rows: &[TdRow], path: &Path) -> Result<()> {
    let mut s = String::from("iteration,state,action,delta,visits,reset_flag\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration, r.state.0, r.action.0, r.delta, r.visits, r.reset_flag as u8
        ));
    }
    std::fs::write(path, s).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisitRow {
    pub state: StateId,
    pub count: u64,
    pub fraction: f64,
}

/// The `k` states most often present in sampled batches, most frequent
/// first; ties go to the lower state id.
pub fn visit_histogram(records: &[StepRecord], n_states: usize, k: usize) -> Vec<VisitRow> {
    let mut counts = vec![0u64; n_states];
    for b in records.iter().flat_map(|r| &r.batch) {
        counts[b.state.0] += 1;
    }
    visit_histogram_from_counts(&counts, k)
}

pub fn visit_histogram_from_counts(counts: &[u64], k: usize) -> Vec<VisitRow> {
    assert!(k >= 1, "histogram needs k >= 1");
    let total: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(k)
        .map(|s| VisitRow {
            state: StateId(s),
            count: counts[s],
            fraction: if total == 0 { 0.0 } else { counts[s] as f64 / total as f64 },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_counts_give_equal_fractions() {
        let h = visit_histogram_from_counts(&[5, 5, 5, 5], 10);
        assert_eq!(h.len(), 4);
        assert!(h.iter().all(|r| r.fraction == 0.25));
        assert_eq!(h.iter().map(|r| r.state.0).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn sorted_descending() {
        let h = visit_histogram_from_counts(&[1, 9, 0, 4], 2);
        assert_eq!(h.iter().map(|r| (r.state.0, r.count)).collect::<Vec<_>>(), vec![(1, 9), (3, 4)]);
    }

    #[test]
    fn empty_records_give_empty_stream() {
        assert!(td_stream(&[]).is_empty());
        let h = visit_histogram(&[], 3, 2);
        assert!(h.iter().all(|r| r.count == 0 && r.fraction == 0.0));
    }
}
