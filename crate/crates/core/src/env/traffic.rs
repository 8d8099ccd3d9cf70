//! Single intersection with a horizontal and a vertical queue.
//!
//! The light cycles `GR -> YR -> RG -> RY -> GR`; `GR` serves the horizontal
//! queue, `RG` the vertical one, and the two amber phases serve nobody.
//! State id is `light + 4 * (q_v + (q_max + 1) * q_h)`.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::mdp::{ActionId, Outcome, StateId};

pub const N_ACTIONS: usize = 2;
pub const CONTINUE: ActionId = ActionId(0);
pub const SWITCH: ActionId = ActionId(1);
pub const ACTION_NAMES: [&str; N_ACTIONS] = ["continue", "switch"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Light {
    /// Horizontal green.
    Gr = 0,
    /// Vertical green.
    Rg = 1,
    /// Horizontal amber.
    Yr = 2,
    /// Vertical amber.
    Ry = 3,
}

impl Light {
    pub const ALL: [Light; 4] = [Light::Gr, Light::Rg, Light::Yr, Light::Ry];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Light {
        Light::ALL[i]
    }

    pub fn next(self) -> Light {
        match self {
            Light::Gr => Light::Yr,
            Light::Yr => Light::Rg,
            Light::Rg => Light::Ry,
            Light::Ry => Light::Gr,
        }
    }

    /// Same phase with the roles of the two queues exchanged.
    pub fn mirrored(self) -> Light {
        match self {
            Light::Gr => Light::Rg,
            Light::Rg => Light::Gr,
            Light::Yr => Light::Ry,
            Light::Ry => Light::Yr,
        }
    }
}

/// Which light decides the queue served during a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceLight {
    /// The light in force when the action is taken.
    Pre,
    /// The light after the action has been applied.
    Post,
}

/// Which queue lengths the quadratic penalty is charged on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardTiming {
    /// Queues of the state the action is taken in.
    Current,
    /// Queues of the realized successor.
    Successor,
}

/// Network input representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficEncoding {
    /// `[q_h / q_max, q_v / q_max, onehot4(light)]`.
    Scaled,
    /// `[q_h, q_v, light]` as plain numbers.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficParams {
    pub q_max: usize,
    pub p: f64,
    pub service_light: ServiceLight,
    pub reward_timing: RewardTiming,
    pub encoding: TrafficEncoding,
}

impl Default for TrafficParams {
    /// Service by the pre-action light, penalty on the successor.
    fn default() -> Self {
        TrafficParams {
            q_max: 5,
            p: 0.45,
            service_light: ServiceLight::Pre,
            reward_timing: RewardTiming::Successor,
            encoding: TrafficEncoding::Scaled,
        }
    }
}

impl TrafficParams {
    pub fn validate(&self) -> Result<()> {
        if self.q_max < 1 {
            return Err(contract("q_max must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(contract(format!("arrival probability {} outside [0,1]", self.p)));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        4 * (self.q_max + 1) * (self.q_max + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrafficState {
    pub q_h: usize,
    pub q_v: usize,
    pub light: Light,
}

impl TrafficState {
    pub fn new(q_h: usize, q_v: usize, light: Light) -> Self {
        TrafficState { q_h, q_v, light }
    }

    pub fn id(self, q_max: usize) -> StateId {
        StateId(self.light.index() + 4 * (self.q_v + (q_max + 1) * self.q_h))
    }

    pub fn from_id(id: StateId, q_max: usize) -> Self {
        let light = Light::from_index(id.0 % 4);
        let rest = id.0 / 4;
        TrafficState { q_h: rest / (q_max + 1), q_v: rest % (q_max + 1), light }
    }

    fn penalty(self) -> f64 {
        -((self.q_h * self.q_h + self.q_v * self.q_v) as f64)
    }
}

/// Swaps the two queues and the matching light phases. An involution.
pub fn mirror(s: TrafficState) -> TrafficState {
    TrafficState { q_h: s.q_v, q_v: s.q_h, light: s.light.mirrored() }
}

/// Successor distribution of `(s, a)`, each successor carrying its reward.
///
/// Within a step: the action sets the new light, one car leaves the queue
/// served by the light selected by `service_light`, then each queue that is
/// below `q_max` after service gains a car with probability `p`.
pub fn tl_transitions(s: TrafficState, a: ActionId, params: &TrafficParams) -> Vec<(TrafficState, f64, f64)> {
    let light = match a {
        CONTINUE => s.light,
        SWITCH => s.light.next(),
        other => panic!("invalid TrafficLight action {other}"),
    };
    let serving = match params.service_light {
        ServiceLight::Pre => s.light,
        ServiceLight::Post => light,
    };
    let mut q_h = s.q_h;
    let mut q_v = s.q_v;
    match serving {
        Light::Gr => q_h = q_h.saturating_sub(1),
        Light::Rg => q_v = q_v.saturating_sub(1),
        Light::Yr | Light::Ry => {}
    }
    let arrivals = |q: usize| -> Vec<(usize, f64)> {
        if q < params.q_max {
            vec![(q, 1.0 - params.p), (q + 1, params.p)]
        } else {
            vec![(q, 1.0)]
        }
    };
    let mut out = Vec::with_capacity(4);
    for (h, ph) in arrivals(q_h) {
        for &(v, pv) in &arrivals(q_v) {
            let next = TrafficState::new(h, v, light);
            let reward = match params.reward_timing {
                RewardTiming::Current => s.penalty(),
                RewardTiming::Successor => next.penalty(),
            };
            out.push((next, ph * pv, reward));
        }
    }
    let row = out
        .iter()
        .map(|&(n, p, r)| Outcome { next: n.id(params.q_max), prob: p, reward: r })
        .collect();
    crate::mdp::canonicalize(row)
        .into_iter()
        .map(|o| (TrafficState::from_id(o.next, params.q_max), o.prob, o.reward))
        .collect()
}

pub fn label(id: StateId, q_max: usize) -> String {
    let s = TrafficState::from_id(id, q_max);
    format!("({},{},{})", s.q_h, s.q_v, s.light.index())
}

/// Parses `(q_h,q_v,light)` (parentheses and spaces optional).
pub fn parse_state(text: &str, q_max: usize) -> Result<TrafficState> {
    let t = text.trim().trim_start_matches('(').trim_end_matches(')');
    let f: Vec<usize> = t
        .split(',')
        .map(|x| x.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| contract(format!("cannot parse traffic state `{text}`")))?;
    match f.as_slice() {
        &[h, v, l] if h <= q_max && v <= q_max && l < 4 => Ok(TrafficState::new(h, v, Light::from_index(l))),
        _ => Err(contract(format!("traffic state `{text}` is out of range"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post_light_current_reward() -> TrafficParams {
        TrafficParams {
            service_light: ServiceLight::Post,
            reward_timing: RewardTiming::Current,
            ..TrafficParams::default()
        }
    }

    fn as_map(v: &[(TrafficState, f64, f64)]) -> Vec<((usize, usize, usize), f64)> {
        v.iter().map(|(s, p, _)| ((s.q_h, s.q_v, s.light.index()), *p)).collect()
    }

    fn close(a: &[((usize, usize, usize), f64)], b: &[((usize, usize, usize), f64)]) {
        assert_eq!(a.len(), b.len(), "{a:?} vs {b:?}");
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.0, y.0);
            assert!((x.1 - y.1).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn amber_has_no_service() {
        for params in [post_light_current_reward(), TrafficParams::default()] {
            let out = tl_transitions(TrafficState::new(0, 0, Light::Yr), CONTINUE, &params);
            let mut got = as_map(&out);
            got.sort_by(|a, b| a.0.cmp(&b.0));
            close(
                &got,
                &[((0, 0, 2), 0.3025), ((0, 1, 2), 0.2475), ((1, 0, 2), 0.2475), ((1, 1, 2), 0.2025)],
            );
        }
        let out = tl_transitions(TrafficState::new(0, 0, Light::Yr), CONTINUE, &post_light_current_reward());
        assert!(out.iter().all(|o| o.2 == 0.0));
    }

    #[test]
    fn full_queues_served_and_capped() {
        let out = tl_transitions(TrafficState::new(5, 5, Light::Gr), CONTINUE, &post_light_current_reward());
        let mut got = as_map(&out);
        got.sort_by(|a, b| a.0.cmp(&b.0));
        close(&got, &[((4, 5, 0), 0.55), ((5, 5, 0), 0.45)]);
        assert!(out.iter().all(|o| o.2 == -50.0));
    }

    #[test]
    fn successor_set_for_zero_two_zero() {
        let out = tl_transitions(TrafficState::new(0, 2, Light::Gr), CONTINUE, &post_light_current_reward());
        let mut got = as_map(&out);
        got.sort_by(|a, b| a.0.cmp(&b.0));
        close(
            &got,
            &[((0, 2, 0), 0.3025), ((0, 3, 0), 0.2475), ((1, 2, 0), 0.2475), ((1, 3, 0), 0.2025)],
        );
        assert!(out.iter().all(|o| o.2 == -4.0));

        // successor-timed penalty charges each branch separately
        let out = tl_transitions(TrafficState::new(0, 2, Light::Gr), CONTINUE, &TrafficParams::default());
        let rewards: Vec<f64> = out.iter().map(|o| o.2).collect();
        assert_eq!(rewards, vec![-4.0, -9.0, -5.0, -10.0]);
    }

    #[test]
    fn service_light_flag() {
        // switching from GR: pre-action light still serves horizontal
        let s = TrafficState::new(3, 3, Light::Gr);
        let pre = TrafficParams { p: 0.0, ..TrafficParams::default() };
        let post = TrafficParams { service_light: ServiceLight::Post, ..pre };
        assert_eq!(tl_transitions(s, SWITCH, &pre)[0].0, TrafficState::new(2, 3, Light::Yr));
        assert_eq!(tl_transitions(s, SWITCH, &post)[0].0, TrafficState::new(3, 3, Light::Yr));
        let s = TrafficState::new(3, 3, Light::Yr);
        assert_eq!(tl_transitions(s, SWITCH, &pre)[0].0, TrafficState::new(3, 3, Light::Rg));
        assert_eq!(tl_transitions(s, SWITCH, &post)[0].0, TrafficState::new(3, 2, Light::Rg));
    }

    #[test]
    fn light_cycle() {
        let mut l = Light::Gr;
        let mut seen = vec![];
        for _ in 0..4 {
            seen.push(l.index());
            l = l.next();
        }
        assert_eq!(seen, vec![0, 2, 1, 3]);
        assert_eq!(l, Light::Gr);
    }

    #[test]
    fn mirror_examples() {
        let m = mirror(TrafficState::new(0, 1, Light::Gr));
        assert_eq!(m, TrafficState::new(1, 0, Light::Rg));
        assert_eq!(mirror(TrafficState::new(2, 2, Light::Gr)), TrafficState::new(2, 2, Light::Rg));
        let params = TrafficParams::default();
        for i in 0..params.n_states() {
            let s = TrafficState::from_id(StateId(i), params.q_max);
            assert_eq!(s.id(params.q_max), StateId(i));
            assert_eq!(mirror(mirror(s)), s);
        }
    }

    #[test]
    fn parse_labels() {
        assert_eq!(parse_state("(0,2,0)", 5).unwrap(), TrafficState::new(0, 2, Light::Gr));
        assert_eq!(parse_state(" 1, 5 ,1", 5).unwrap(), TrafficState::new(1, 5, Light::Rg));
        assert!(parse_state("(6,0,0)", 5).is_err());
        assert!(parse_state("x", 5).is_err());
        assert_eq!(label(TrafficState::new(1, 5, Light::Rg).id(5), 5), "(1,5,1)");
    }
}
