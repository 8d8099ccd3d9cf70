//! The two environments, their exact models and network encodings.

pub mod frozen_lake;
pub mod traffic;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, Outcome, StateId, TransitionModel};

pub use frozen_lake::{fl_transitions, FrozenLakeState};
pub use traffic::{mirror, tl_transitions, Light, TrafficParams, TrafficState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    FrozenLake,
    TrafficLight,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::FrozenLake => "frozenlake",
            EnvKind::TrafficLight => "trafficlight",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frozenlake" => Ok(EnvKind::FrozenLake),
            "trafficlight" => Ok(EnvKind::TrafficLight),
            _ => Err(Error::UnknownEnv(s.to_string())),
        }
    }
}

/// An environment instance: kind plus parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum Env {
    FrozenLake,
    TrafficLight(TrafficParams),
}

impl Env {
    pub fn frozen_lake() -> Self {
        Env::FrozenLake
    }

    pub fn traffic_light(params: TrafficParams) -> Result<Self> {
        params.validate()?;
        Ok(Env::TrafficLight(params))
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            Env::FrozenLake => EnvKind::FrozenLake,
            Env::TrafficLight(_) => EnvKind::TrafficLight,
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            Env::FrozenLake => frozen_lake::N_STATES,
            Env::TrafficLight(p) => p.n_states(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Env::FrozenLake => frozen_lake::N_ACTIONS,
            Env::TrafficLight(_) => traffic::N_ACTIONS,
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states() * self.n_actions()
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Env::FrozenLake => frozen_lake::N_STATES,
            Env::TrafficLight(p) => match p.encoding {
                traffic::TrafficEncoding::Scaled => 6,
                traffic::TrafficEncoding::Raw => 3,
            },
        }
    }

    /// `(0,0)` for FrozenLake, `(0,0,GR)` for TrafficLight.
    pub fn initial_state(&self) -> StateId {
        match self {
            Env::FrozenLake => FrozenLakeState::new(0, 0).id(),
            Env::TrafficLight(p) => TrafficState::new(0, 0, Light::Gr).id(p.q_max),
        }
    }

    /// Holes and the goal of FrozenLake; TrafficLight has none.
    pub fn is_absorbing(&self, s: StateId) -> bool {
        match self {
            Env::FrozenLake => FrozenLakeState::from_id(s).is_absorbing(),
            Env::TrafficLight(_) => false,
        }
    }

    pub fn transitions(&self, s: StateId, a: ActionId) -> Vec<Outcome> {
        match self {
            Env::FrozenLake => fl_transitions(FrozenLakeState::from_id(s), a),
            Env::TrafficLight(p) => {
                tl_transitions(TrafficState::from_id(s, p.q_max), a, p)
                    .into_iter()
                    .map(|(n, prob, reward)| Outcome { next: n.id(p.q_max), prob, reward })
                    .collect()
            }
        }
    }

    /// Enumerates every state and action into an exact model.
    pub fn build_model(&self) -> TransitionModel {
        let (ns, na) = (self.n_states(), self.n_actions());
        let rows = (0..ns)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .map(|(s, a)| self.transitions(StateId(s), ActionId(a)))
            .collect();
        TransitionModel::new(ns, na, rows).expect("environment dynamics are stochastic")
    }

    /// Writes the observation of `s` into `out` (length [`Env::obs_dim`]).
    pub fn encode_into(&self, s: StateId, out: &mut [f64]) {
        assert_eq!(out.len(), self.obs_dim());
        out.iter_mut().for_each(|v| *v = 0.0);
        match self {
            Env::FrozenLake => out[s.0] = 1.0,
            Env::TrafficLight(p) => {
                let t = TrafficState::from_id(s, p.q_max);
                match p.encoding {
                    traffic::TrafficEncoding::Scaled => {
                        out[0] = t.q_h as f64 / p.q_max as f64;
                        out[1] = t.q_v as f64 / p.q_max as f64;
                        out[2 + t.light.index()] = 1.0;
                    }
                    traffic::TrafficEncoding::Raw => {
                        out[0] = t.q_h as f64;
                        out[1] = t.q_v as f64;
                        out[2] = t.light.index() as f64;
                    }
                }
            }
        }
    }

    pub fn encode(&self, s: StateId) -> Vec<f64> {
        let mut v = vec![0.0; self.obs_dim()];
        self.encode_into(s, &mut v);
        v
    }

    /// Observation matrix, one row per state.
    pub fn encode_all(&self) -> Vec<Vec<f64>> {
        (0..self.n_states()).map(|s| self.encode(StateId(s))).collect()
    }

    pub fn state_label(&self, s: StateId) -> String {
        match self {
            Env::FrozenLake => frozen_lake::label(s),
            Env::TrafficLight(p) => traffic::label(s, p.q_max),
        }
    }

    pub fn action_label(&self, a: ActionId) -> &'static str {
        match self {
            Env::FrozenLake => frozen_lake::ACTION_NAMES[a.0],
            Env::TrafficLight(_) => traffic::ACTION_NAMES[a.0],
        }
    }

    /// Parses a state given either as an integer id or as a coordinate tuple.
    pub fn parse_state(&self, text: &str) -> Result<StateId> {
        if let Ok(id) = text.trim().parse::<usize>() {
            if id < self.n_states() {
                return Ok(StateId(id));
            }
        }
        match self {
            Env::FrozenLake => {
                let t = text.trim().trim_start_matches('(').trim_end_matches(')');
                let f: Vec<usize> = t.split(',').filter_map(|x| x.trim().parse().ok()).collect();
                match f.as_slice() {
                    &[x, y] if x < 4 && y < 4 => Ok(FrozenLakeState::new(x, y).id()),
                    _ => Err(crate::error::contract(format!("cannot parse FrozenLake state `{text}`"))),
                }
            }
            Env::TrafficLight(p) => Ok(traffic::parse_state(text, p.q_max)?.id(p.q_max)),
        }
    }

    /// Parses an action by index or by name (`L`/`D`/`R`/`U`, `continue`/`switch`).
    pub fn parse_action(&self, text: &str) -> Result<ActionId> {
        let t = text.trim();
        if let Ok(a) = t.parse::<usize>() {
            if a < self.n_actions() {
                return Ok(ActionId(a));
            }
        }
        (0..self.n_actions())
            .find(|&a| self.action_label(ActionId(a)).eq_ignore_ascii_case(t))
            .map(ActionId)
            .ok_or_else(|| crate::error::contract(format!("unknown action `{text}` for {}", self.kind())))
    }
}

/// Picks the outcome whose cumulative probability interval contains `u`.
pub fn pick_outcome(outcomes: &[Outcome], u: f64) -> Outcome {
    let mut acc = 0.0;
    for o in outcomes {
        acc += o.prob;
        if u < acc {
            return *o;
        }
    }
    *outcomes.last().expect("empty outcome list")
}

/// Samples `(next, reward)` from the model with the caller's generator.
pub fn sample_step<R: Rng + ?Sized>(
    model: &TransitionModel,
    s: StateId,
    a: ActionId,
    rng: &mut R,
) -> (StateId, f64) {
    let o = pick_outcome(model.outcomes(s, a), rng.gen::<f64>());
    (o.next, o.reward)
}
