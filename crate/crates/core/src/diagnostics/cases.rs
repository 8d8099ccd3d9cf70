use std::fmt;
use std::path::Path;

use crate::dqn::{CaseBinding, StepRecord};
use crate::error::{contract, io_err, Result};
use crate::mdp::{ActionId, StateId};

/// Where a tracked pair stood in one training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaseLabel {
    Case1a,
    Case1b,
    /// Not in the sampled batch.
    Case2,
}

impl CaseLabel {
    pub const ALL: [CaseLabel; 3] = [CaseLabel::Case1a, CaseLabel::Case1b, CaseLabel::Case2];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseLabel::Case1a => "case1a",
            CaseLabel::Case1b => "case1b",
            CaseLabel::Case2 => "case2",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label of `tracked` in `record`. Repeated occurrences use their mean
/// TD-error and a zero TD-error counts as the increase case.
pub fn classify_case(tracked: (StateId, ActionId), record: &StepRecord, binding: CaseBinding) -> CaseLabel {
    let deltas: Vec<f64> =
        record.batch.iter().filter(|b| (b.state, b.action) == tracked).map(|b| b.delta).collect();
    if deltas.is_empty() {
        return CaseLabel::Case2;
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let negative = mean < 0.0;
    match (binding, negative) {
        (CaseBinding::Negative, true) | (CaseBinding::Positive, false) => CaseLabel::Case1a,
        _ => CaseLabel::Case1b,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseRow {
    pub iteration: u64,
    pub label: CaseLabel,
    pub dq: f64,
}

/// Count and mean `Delta Q` of the tracked pair per label.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSummary {
    pub rows: Vec<CaseRow>,
    counts: [usize; 3],
    sums: [f64; 3],
}

impl CaseSummary {
    pub fn count(&self, label: CaseLabel) -> usize {
        self.counts[label.slot()]
    }

    /// `None` for an empty partition.
    pub fn mean(&self, label: CaseLabel) -> Option<f64> {
        let c = self.count(label);
        (c > 0).then(|| self.sums[label.slot()] / c as f64)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Partitions `records` by [`classify_case`] and averages the tracked pair's
/// actual change per label. Every record must carry the tracked pair.
pub fn case_averages(records: &[StepRecord], tracked: (StateId, ActionId), binding: CaseBinding) -> Result<CaseSummary> {
    let mut summary = CaseSummary { rows: Vec::with_capacity(records.len()), counts: [0; 3], sums: [0.0; 3] };
    for r in records {
        let t = r
            .tracked
            .iter()
            .find(|t| (t.state, t.action) == tracked)
            .ok_or_else(|| contract(format!("iteration {} does not track pair {}:{}", r.iteration, tracked.0 .0, tracked.1 .0)))?;
        let label = classify_case(tracked, r, binding);
        let dq = t.delta_q();
        summary.counts[label.slot()] += 1;
        summary.sums[label.slot()] += dq;
        summary.rows.push(CaseRow { iteration: r.iteration, label, dq });
    }
    Ok(summary)
}

/// `iteration,label,dq`.
pub fn write_cases_csv(rows: &[CaseRow], path: &Path) -> Result<()> {
    let mut s = String::from("iteration,label,dq\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.iteration, r.label, r.dq));
    }
    std::fs::write(path, s).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::{BatchElement, TrackedQ};

    const PAIR: (StateId, ActionId) = (StateId(8), ActionId(0));

    fn record(iteration: u64, deltas: &[f64], dq: f64) -> StepRecord {
        StepRecord {
            iteration,
            state: StateId(0),
            action: ActionId(0),
            reward: 0.0,
            next_state: StateId(0),
            epsilon: 0.02,
            synced: false,
            reset: false,
            batch: deltas
                .iter()
                .map(|&delta| BatchElement {
                    state: PAIR.0,
                    action: PAIR.1,
                    next_state: StateId(1),
                    reward: -4.0,
                    delta,
                    entry_step: 0,
                    visits: 1,
                    at_reset: false,
                })
                .chain(std::iter::once(BatchElement {
                    state: StateId(3),
                    action: ActionId(1),
                    next_state: StateId(1),
                    reward: -1.0,
                    delta: 5.0,
                    entry_step: 0,
                    visits: 1,
                    at_reset: false,
                }))
                .collect(),
            tracked: vec![TrackedQ { state: PAIR.0, action: PAIR.1, before: 1.0, after: 1.0 + dq }],
        }
    }

    #[test]
    fn labels_follow_sign_and_binding() {
        let neg = CaseBinding::Negative;
        assert_eq!(classify_case(PAIR, &record(0, &[], 0.0), neg), CaseLabel::Case2);
        assert_eq!(classify_case(PAIR, &record(0, &[-10.3], 0.0), neg), CaseLabel::Case1a);
        assert_eq!(classify_case(PAIR, &record(0, &[299.335], 0.0), neg), CaseLabel::Case1b);
        assert_eq!(classify_case(PAIR, &record(0, &[0.0], 0.0), neg), CaseLabel::Case1b);
        assert_eq!(classify_case(PAIR, &record(0, &[-3.0, 1.0], 0.0), neg), CaseLabel::Case1a);
        let pos = CaseBinding::Positive;
        assert_eq!(classify_case(PAIR, &record(0, &[-10.3], 0.0), pos), CaseLabel::Case1b);
        assert_eq!(classify_case(PAIR, &record(0, &[0.0], 0.0), pos), CaseLabel::Case1a);
    }

    #[test]
    fn partition_arithmetic() {
        let recs = vec![
            record(0, &[5.0], 1.0),
            record(1, &[-2.0], -1.0),
            record(2, &[], 0.0),
            record(3, &[1.0], 1.0),
            record(4, &[], 0.0),
        ];
        let s = case_averages(&recs, PAIR, CaseBinding::Positive).unwrap();
        assert_eq!(s.mean(CaseLabel::Case1a), Some(1.0));
        assert_eq!(s.mean(CaseLabel::Case1b), Some(-1.0));
        assert_eq!(s.mean(CaseLabel::Case2), Some(0.0));
        assert_eq!(s.total(), recs.len());
        assert_eq!(s.count(CaseLabel::Case1a), 2);
    }

    #[test]
    fn empty_partitions_are_absent() {
        let recs = vec![record(0, &[], 0.0), record(1, &[], 0.0)];
        let s = case_averages(&recs, PAIR, CaseBinding::Negative).unwrap();
        assert_eq!(s.mean(CaseLabel::Case2), Some(0.0));
        assert_eq!(s.mean(CaseLabel::Case1a), None);
        assert_eq!(s.count(CaseLabel::Case1b), 0);
        let none = case_averages(&[], PAIR, CaseBinding::Negative).unwrap();
        assert_eq!(none.total(), 0);
    }

    #[test]
    fn untracked_pair_is_an_error() {
        let recs = vec![record(0, &[], 0.0)];
        assert!(case_averages(&recs, (StateId(1), ActionId(1)), CaseBinding::Negative).is_err());
    }
}
