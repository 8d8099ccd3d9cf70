//! The 4x4 slippery FrozenLake map.
//!
//! ```text
//!   S F F F
//!   F H F H
//!   F F F H
//!   H F F G
//! ```
//!
//! Coordinates are `(x, y)` = (column, row) with the origin at the top-left
//! start cell; the state id is `4 * y + x`.

use crate::mdp::{ActionId, Outcome, StateId};

pub const SIDE: usize = 4;
pub const N_STATES: usize = SIDE * SIDE;
pub const N_ACTIONS: usize = 4;

pub const LEFT: ActionId = ActionId(0);
pub const DOWN: ActionId = ActionId(1);
pub const RIGHT: ActionId = ActionId(2);
pub const UP: ActionId = ActionId(3);

pub const ACTION_NAMES: [&str; N_ACTIONS] = ["L", "D", "R", "U"];

const HOLES: [(usize, usize); 4] = [(1, 1), (3, 1), (3, 2), (0, 3)];
const GOAL: (usize, usize) = (3, 3);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Start,
    Frozen,
    Hole,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrozenLakeState {
    pub x: usize,
    pub y: usize,
}

impl FrozenLakeState {
    pub fn new(x: usize, y: usize) -> Self {
        assert!(x < SIDE && y < SIDE, "({x},{y}) is off the map");
        FrozenLakeState { x, y }
    }

    pub fn from_id(id: StateId) -> Self {
        FrozenLakeState::new(id.0 % SIDE, id.0 / SIDE)
    }

    pub fn id(self) -> StateId {
        StateId(SIDE * self.y + self.x)
    }

    pub fn cell(self) -> Cell {
        let xy = (self.x, self.y);
        if xy == (0, 0) {
            Cell::Start
        } else if xy == GOAL {
            Cell::Goal
        } else if HOLES.contains(&xy) {
            Cell::Hole
        } else {
            Cell::Frozen
        }
    }

    pub fn is_absorbing(self) -> bool {
        matches!(self.cell(), Cell::Hole | Cell::Goal)
    }

    /// Moves one cell in `dir`, staying put at the edge of the map.
    fn step(self, dir: ActionId) -> Self {
        let (x, y) = (self.x, self.y);
        match dir {
            LEFT => FrozenLakeState { x: x.saturating_sub(1), y },
            DOWN => FrozenLakeState { x, y: (y + 1).min(SIDE - 1) },
            RIGHT => FrozenLakeState { x: (x + 1).min(SIDE - 1), y },
            UP => FrozenLakeState { x, y: y.saturating_sub(1) },
            other => panic!("invalid FrozenLake action {other}"),
        }
    }
}

/// Directions actually realized when `a` is chosen: the intended one and
/// its two perpendicular neighbours.
fn slip_set(a: ActionId) -> [ActionId; 3] {
    let n = N_ACTIONS;
    [ActionId((a.0 + n - 1) % n), a, ActionId((a.0 + 1) % n)]
}

/// Successor distribution of `(s, a)`. Holes and the goal self-loop; the
/// reward is 1 exactly when `s` is the goal.
pub fn fl_transitions(s: FrozenLakeState, a: ActionId) -> Vec<Outcome> {
    let reward = if s.cell() == Cell::Goal { 1.0 } else { 0.0 };
    if s.is_absorbing() {
        return vec![Outcome { next: s.id(), prob: 1.0, reward }];
    }
    let row = slip_set(a)
        .iter()
        .map(|&dir| Outcome { next: s.step(dir).id(), prob: 1.0 / 3.0, reward })
        .collect();
    crate::mdp::canonicalize(row)
}

pub fn label(id: StateId) -> String {
    let s = FrozenLakeState::from_id(id);
    format!("({},{})", s.x, s.y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(v: &[Outcome]) -> Vec<(usize, f64)> {
        v.iter().map(|o| (o.next.0, o.prob)).collect()
    }

    #[test]
    fn slip_sets_match_the_rules() {
        assert_eq!(slip_set(LEFT), [UP, LEFT, DOWN]);
        assert_eq!(slip_set(DOWN), [LEFT, DOWN, RIGHT]);
        assert_eq!(slip_set(RIGHT), [DOWN, RIGHT, UP]);
        assert_eq!(slip_set(UP), [RIGHT, UP, LEFT]);
    }

    #[test]
    fn start_left_clamps() {
        let out = fl_transitions(FrozenLakeState::new(0, 0), LEFT);
        let p = probs(&out);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].0, 0);
        assert!((p[0].1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p[1].0, FrozenLakeState::new(0, 1).id().0);
        assert!((p[1].1 - 1.0 / 3.0).abs() < 1e-15);
        assert!(out.iter().all(|o| o.reward == 0.0));
    }

    #[test]
    fn goal_absorbs_with_reward() {
        for a in 0..4 {
            let out = fl_transitions(FrozenLakeState::new(3, 3), ActionId(a));
            assert_eq!(out, vec![Outcome { next: StateId(15), prob: 1.0, reward: 1.0 }]);
        }
        for &(x, y) in &HOLES {
            let s = FrozenLakeState::new(x, y);
            let out = fl_transitions(s, DOWN);
            assert_eq!(out, vec![Outcome { next: s.id(), prob: 1.0, reward: 0.0 }]);
        }
    }

    #[test]
    fn down_from_one_two() {
        let out = fl_transitions(FrozenLakeState::new(1, 2), DOWN);
        let ids: Vec<usize> = out.iter().map(|o| o.next.0).collect();
        let want = [(0, 2), (2, 2), (1, 3)].map(|(x, y)| FrozenLakeState::new(x, y).id().0);
        let mut want = want.to_vec();
        want.sort();
        assert_eq!(ids, want);
        assert!(out.iter().all(|o| (o.prob - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn indexing() {
        assert_eq!(FrozenLakeState::new(1, 0).id(), StateId(1));
        assert_eq!(FrozenLakeState::new(2, 3).id(), StateId(14));
        assert_eq!(label(StateId(14)), "(2,3)");
        for i in 0..N_STATES {
            assert_eq!(FrozenLakeState::from_id(StateId(i)).id(), StateId(i));
        }
    }
}
