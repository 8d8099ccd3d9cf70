//! Training configuration and its flat `key = value` file format.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected so a
//! typo never silently falls back to a default.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::traffic::{RewardTiming, ServiceLight, TrafficEncoding};
use crate::env::{Env, EnvKind, TrafficParams};
use crate::error::{io_err, Error, Result};
use crate::mdp::{ActionId, StateId};
use crate::nn::{Loss, OptimizerKind, DEFAULT_HIDDEN};

/// Which in-batch TD-error sign is called "Case 1a".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseBinding {
    /// Case 1a = negative TD-error (the band of the non-growing successors).
    Negative,
    /// Case 1a = positive TD-error.
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: Env,
    pub total_steps: u64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    /// Target network sync period.
    pub target_update: u64,
    pub exploration_initial: f64,
    pub exploration_final: f64,
    pub exploration_fraction: f64,
    /// Transitions collected before the first gradient step.
    pub warmup: u64,
    /// The environment returns to its initial state every this many steps.
    pub reset_period: u64,
    pub loss: Loss,
    pub double_q: bool,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub hidden: usize,
    /// Cadence of Q-table snapshots and metrics rows.
    pub snapshot_every: u64,
    /// Cadence of parameter files written by the runner (0 = final only).
    pub param_snapshot_every: u64,
    /// Every k-th step record is persisted by the runner (0 = none).
    pub record_every: u64,
    /// Inclusive iteration range whose step records are all persisted.
    pub record_window: Option<(u64, u64)>,
    /// Pairs whose Q values are logged before and after every update.
    pub tracked: Vec<(StateId, ActionId)>,
    pub case_binding: CaseBinding,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: Env::FrozenLake,
            total_steps: 500_000,
            gamma: 0.99,
            learning_rate: 5e-4,
            buffer_size: 50_000,
            batch_size: 32,
            target_update: 500,
            exploration_initial: 1.0,
            exploration_final: 0.02,
            exploration_fraction: 0.1,
            warmup: 1000,
            reset_period: 1000,
            loss: Loss::Mse,
            double_q: true,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            snapshot_every: 500,
            param_snapshot_every: 5000,
            record_every: 100,
            record_window: None,
            tracked: Vec::new(),
            case_binding: CaseBinding::Negative,
        }
    }
}

fn cfg_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), reason: reason.into() }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| cfg_err(key, format!("cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(cfg_err(key, format!("expected true/false, got `{v}`"))),
    }
}

impl TrainConfig {
    /// Defaults for an environment: 500k steps and MSE on FrozenLake, 1M steps and Huber on TrafficLight.
    pub fn for_env(env: Env) -> Self {
        let (total_steps, loss) = match env.kind() {
            EnvKind::FrozenLake => (500_000, Loss::Mse),
            EnvKind::TrafficLight => (1_000_000, Loss::Huber),
        };
        TrainConfig { env, total_steps, loss, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("buffer_size", self.buffer_size as u64),
            ("batch_size", self.batch_size as u64),
            ("target_update", self.target_update),
            ("warmup", self.warmup),
            ("reset_period", self.reset_period),
            ("hidden", self.hidden as u64),
            ("snapshot_every", self.snapshot_every),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(cfg_err(k, "must be positive"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(cfg_err("gamma", "must lie in (0,1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(cfg_err("learning_rate", "must be positive"));
        }
        if !(self.exploration_fraction > 0.0 && self.exploration_fraction <= 1.0) {
            return Err(cfg_err("exploration_fraction", "must lie in (0,1]"));
        }
        for (k, v) in [("exploration_initial", self.exploration_initial), ("exploration_final", self.exploration_final)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(cfg_err(k, "must lie in [0,1]"));
            }
        }
        if let Env::TrafficLight(p) = &self.env {
            p.validate().map_err(|e| cfg_err("q_max/p", e.to_string()))?;
        }
        for &(s, a) in &self.tracked {
            if s.0 >= self.env.n_states() || a.0 >= self.env.n_actions() {
                return Err(cfg_err("tracked", format!("pair ({s},{a}) outside the environment")));
            }
        }
        Ok(())
    }

    /// Parses the flat key/value format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(&format!("line {}", n + 1), format!("expected `key = value`, got `{line}`")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }

        // environment first: tracked pairs and defaults depend on it
        let mut traffic = TrafficParams::default();
        let mut kind = EnvKind::FrozenLake;
        for (k, v) in &pairs {
            match k.as_str() {
                "env" => kind = v.parse().map_err(|e: Error| cfg_err(k, e.to_string()))?,
                "q_max" => traffic.q_max = parse_num(k, v)?,
                "p" => traffic.p = parse_num(k, v)?,
                "service_light" => {
                    traffic.service_light = match v.as_str() {
                        "pre" => ServiceLight::Pre,
                        "post" => ServiceLight::Post,
                        _ => return Err(cfg_err(k, "expected `pre` or `post`")),
                    }
                }
                "reward_timing" => {
                    traffic.reward_timing = match v.as_str() {
                        "current" => RewardTiming::Current,
                        "successor" => RewardTiming::Successor,
                        _ => return Err(cfg_err(k, "expected `current` or `successor`")),
                    }
                }
                "encoding" => {
                    traffic.encoding = match v.as_str() {
                        "scaled" => TrafficEncoding::Scaled,
                        "raw" => TrafficEncoding::Raw,
                        _ => return Err(cfg_err(k, "expected `scaled` or `raw`")),
                    }
                }
                _ => {}
            }
        }
        let env = match kind {
            EnvKind::FrozenLake => Env::FrozenLake,
            EnvKind::TrafficLight => {
                Env::traffic_light(traffic).map_err(|e| cfg_err("q_max/p", e.to_string()))?
            }
        };

        let mut cfg = TrainConfig::for_env(env);
        for (k, v) in &pairs {
            let k = k.as_str();
            match k {
                "env" | "q_max" | "p" | "service_light" | "reward_timing" | "encoding" => {}
                "total_steps" => cfg.total_steps = parse_num(k, v)?,
                "gamma" => cfg.gamma = parse_num(k, v)?,
                "learning_rate" => cfg.learning_rate = parse_num(k, v)?,
                "buffer_size" => cfg.buffer_size = parse_num(k, v)?,
                "batch_size" => cfg.batch_size = parse_num(k, v)?,
                "target_update" => cfg.target_update = parse_num(k, v)?,
                "exploration_initial" => cfg.exploration_initial = parse_num(k, v)?,
                "exploration_final" => cfg.exploration_final = parse_num(k, v)?,
                "exploration_fraction" => cfg.exploration_fraction = parse_num(k, v)?,
                "warmup" => cfg.warmup = parse_num(k, v)?,
                "reset_period" => cfg.reset_period = parse_num(k, v)?,
                "loss" => {
                    cfg.loss = match v.as_str() {
                        "mse" => Loss::Mse,
                        "huber" => Loss::Huber,
                        _ => return Err(cfg_err(k, "expected `mse` or `huber`")),
                    }
                }
                "double_q" => cfg.double_q = parse_bool(k, v)?,
                "optimizer" => {
                    cfg.optimizer = match v.as_str() {
                        "sgd" => OptimizerKind::Sgd,
                        "adam" => OptimizerKind::Adam,
                        _ => return Err(cfg_err(k, "expected `sgd` or `adam`")),
                    }
                }
                "seed" => cfg.seed = parse_num(k, v)?,
                "hidden" => cfg.hidden = parse_num(k, v)?,
                "snapshot_every" => cfg.snapshot_every = parse_num(k, v)?,
                "param_snapshot_every" => cfg.param_snapshot_every = parse_num(k, v)?,
                "record_every" => cfg.record_every = parse_num(k, v)?,
                "record_window" => {
                    cfg.record_window = if v.is_empty() || v == "none" {
                        None
                    } else {
                        let (a, b) = v.split_once("..").ok_or_else(|| cfg_err(k, "expected `start..end`"))?;
                        Some((parse_num(k, a.trim())?, parse_num(k, b.trim())?))
                    }
                }
                "tracked" => {
                    cfg.tracked = v
                        .split(';')
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(|p| parse_pair(&cfg.env, p).map_err(|e| cfg_err(k, e.to_string())))
                        .collect::<Result<_>>()?
                }
                "case_binding" => {
                    cfg.case_binding = match v.as_str() {
                        "negative" => CaseBinding::Negative,
                        "positive" => CaseBinding::Positive,
                        _ => return Err(cfg_err(k, "expected `negative` or `positive`")),
                    }
                }
                other => return Err(cfg_err(other, "unknown key")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    /// Renders the config in the key/value format; `parse` inverts it.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "env = {}", self.env.kind());
        if let Env::TrafficLight(p) = &self.env {
            let _ = writeln!(s, "q_max = {}", p.q_max);
            let _ = writeln!(s, "p = {:?}", p.p);
            let _ = writeln!(s, "service_light = {}", match p.service_light {
                ServiceLight::Pre => "pre",
                ServiceLight::Post => "post",
            });
            let _ = writeln!(s, "reward_timing = {}", match p.reward_timing {
                RewardTiming::Current => "current",
                RewardTiming::Successor => "successor",
            });
            let _ = writeln!(s, "encoding = {}", match p.encoding {
                TrafficEncoding::Scaled => "scaled",
                TrafficEncoding::Raw => "raw",
            });
        }
        let _ = writeln!(s, "total_steps = {}", self.total_steps);
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(s, "buffer_size = {}", self.buffer_size);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "target_update = {}", self.target_update);
        let _ = writeln!(s, "exploration_initial = {:?}", self.exploration_initial);
        let _ = writeln!(s, "exploration_final = {:?}", self.exploration_final);
        let _ = writeln!(s, "exploration_fraction = {:?}", self.exploration_fraction);
        let _ = writeln!(s, "warmup = {}", self.warmup);
        let _ = writeln!(s, "reset_period = {}", self.reset_period);
        let _ = writeln!(s, "loss = {}", match self.loss {
            Loss::Mse => "mse",
            Loss::Huber => "huber",
        });
        let _ = writeln!(s, "double_q = {}", self.double_q);
        let _ = writeln!(s, "optimizer = {}", match self.optimizer {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        });
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "hidden = {}", self.hidden);
        let _ = writeln!(s, "snapshot_every = {}", self.snapshot_every);
        let _ = writeln!(s, "param_snapshot_every = {}", self.param_snapshot_every);
        let _ = writeln!(s, "record_every = {}", self.record_every);
        if let Some((a, b)) = self.record_window {
            let _ = writeln!(s, "record_window = {a}..{b}");
        }
        if !self.tracked.is_empty() {
            let pairs: Vec<String> = self
                .tracked
                .iter()
                .map(|&(st, a)| format!("{}:{}", self.env.state_label(st), self.env.action_label(a)))
                .collect();
            let _ = writeln!(s, "tracked = {}", pairs.join("; "));
        }
        let _ = writeln!(s, "case_binding = {}", match self.case_binding {
            CaseBinding::Negative => "negative",
            CaseBinding::Positive => "positive",
        });
        s
    }

    pub fn discount(&self) -> crate::mdp::Discount {
        crate::mdp::Discount::new(self.gamma).expect("validated gamma")
    }
}

/// Parses `state:action`, e.g. `(0,2,0):continue` or `1:U`.
pub fn parse_pair(env: &Env, text: &str) -> Result<(StateId, ActionId)> {
    let (s, a) = text
        .rsplit_once(':')
        .ok_or_else(|| crate::error::contract(format!("expected `state:action`, got `{text}`")))?;
    Ok((env.parse_state(s)?, env.parse_action(a)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TrafficState;

    #[test]
    fn defaults_match_the_reference_settings() {
        let c = TrainConfig::default();
        assert_eq!(c.gamma, 0.99);
        assert_eq!(c.learning_rate, 0.0005);
        assert_eq!(c.buffer_size, 50_000);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.target_update, 500);
        assert_eq!((c.exploration_initial, c.exploration_final, c.exploration_fraction), (1.0, 0.02, 0.1));
        assert_eq!(c.warmup, 1000);
        assert_eq!(c.reset_period, 1000);
        assert!(c.double_q);
        assert_eq!(TrainConfig::for_env(Env::frozen_lake()).loss, Loss::Mse);
        let tl = TrainConfig::for_env(Env::traffic_light(Default::default()).unwrap());
        assert_eq!(tl.loss, Loss::Huber);
    }

    #[test]
    fn parse_and_render_round_trip() {
        let text = "
            # traffic run
            env = trafficlight
            q_max = 5
            p = 0.45
            total_steps = 2000   # short
            loss = mse
            optimizer = sgd
            double_q = false
            seed = 7
            tracked = (0,2,0):continue; (1,5,0):switch
            record_window = 1500..1700
        ";
        let cfg = TrainConfig::parse(text).unwrap();
        assert_eq!(cfg.total_steps, 2000);
        assert_eq!(cfg.loss, Loss::Mse);
        assert!(!cfg.double_q);
        assert_eq!(cfg.record_window, Some((1500, 1700)));
        let s = TrafficState::new(0, 2, crate::env::Light::Gr).id(5);
        assert_eq!(cfg.tracked[0], (s, ActionId(0)));
        assert_eq!(TrainConfig::parse(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_key() {
        let err = TrainConfig::parse("env = frozenlake\nbatch_sise = 3").unwrap_err();
        assert!(err.to_string().contains("batch_sise"), "{err}");
        let err = TrainConfig::parse("gamma = 1.5").unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        let err = TrainConfig::parse("seed = x").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        let err = TrainConfig::parse("env = pong").unwrap_err();
        assert!(err.to_string().contains("env"), "{err}");
        assert!(TrainConfig::parse("just words").is_err());
    }
}
