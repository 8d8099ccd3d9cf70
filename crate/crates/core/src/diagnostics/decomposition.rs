use rand::Rng;

use super::{q_snapshot, NtkMatrix, PairIndex};
use crate::dqn::{compute_targets, StepRecord, Trainer};
use crate::env::Env;
use crate::error::{contract, Error, Result};
use crate::mdp::{ActionId, StateId};
use crate::nn::{Loss, NetworkParams, Sample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: StateId,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateId,
}

/// A minibatch with fixed regression targets and the TD-errors
/// `target - Q(s,a)` under the parameters it was built against.
#[derive(Debug, Clone, PartialEq)]
pub struct TdBatch {
    pub pairs: Vec<(StateId, ActionId)>,
    pub targets: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl TdBatch {
    /// Targets from `target_net` with the training bootstrap rule.
    pub fn from_transitions(
        params: &NetworkParams,
        target_net: &NetworkParams,
        env: &Env,
        transitions: &[Transition],
        gamma: f64,
        double_q: bool,
    ) -> Result<Self> {
        let next_obs: Vec<Vec<f64>> = transitions.iter().map(|t| env.encode(t.next_state)).collect();
        let inputs: Vec<(f64, &[f64])> =
            transitions.iter().zip(&next_obs).map(|(t, o)| (t.reward, o.as_slice())).collect();
        let targets = compute_targets(&inputs, params, target_net, gamma, double_q)?;
        let pairs: Vec<(StateId, ActionId)> = transitions.iter().map(|t| (t.state, t.action)).collect();
        TdBatch::with_targets(params, env, pairs, targets)
    }

    pub fn with_targets(
        params: &NetworkParams,
        env: &Env,
        pairs: Vec<(StateId, ActionId)>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if pairs.len() != targets.len() || pairs.is_empty() {
            return Err(contract("batch needs one target per pair and at least one pair"));
        }
        let mut act = params.activations();
        let deltas = pairs
            .iter()
            .zip(&targets)
            .map(|(&(s, a), &y)| {
                params.forward_into(&env.encode(s), &mut act);
                y - act.q()[a.0]
            })
            .collect();
        Ok(TdBatch { pairs, targets, deltas })
    }

    /// A fresh batch drawn from a trainer's replay buffer using its current
    /// online and target networks.
    pub fn sample<R: Rng + ?Sized>(trainer: &Trainer, size: usize, rng: &mut R) -> Result<Self> {
        let slots = trainer.buffer().sample_slots(size, rng)?;
        let transitions: Vec<Transition> = slots
            .iter()
            .map(|&i| {
                let e = trainer.buffer().get(i);
                Transition { state: e.state, action: e.action, reward: e.reward, next_state: e.next_state }
            })
            .collect();
        let cfg = trainer.config();
        TdBatch::from_transitions(trainer.online(), trainer.target(), trainer.env(), &transitions, cfg.gamma, cfg.double_q)
    }

    /// The transitions a training step sampled, re-targeted against the
    /// given networks.
    pub fn from_record(
        record: &StepRecord,
        params: &NetworkParams,
        target_net: &NetworkParams,
        env: &Env,
        gamma: f64,
        double_q: bool,
    ) -> Result<Self> {
        let transitions: Vec<Transition> = record
            .batch
            .iter()
            .map(|b| Transition { state: b.state, action: b.action, reward: b.reward, next_state: b.next_state })
            .collect();
        TdBatch::from_transitions(params, target_net, env, &transitions, gamma, double_q)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Empirical pair frequencies of a batch and the mean TD-error per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDistribution {
    pub weights: Vec<f64>,
    pub mean_delta: Vec<f64>,
}

impl BatchDistribution {
    pub fn from_batch(batch: &TdBatch, index: PairIndex) -> Self {
        let n = index.len();
        let mut counts = vec![0usize; n];
        let mut sums = vec![0.0; n];
        for (&(s, a), &d) in batch.pairs.iter().zip(&batch.deltas) {
            let i = index.index(s, a);
            counts[i] += 1;
            sums[i] += d;
        }
        let b = batch.len() as f64;
        BatchDistribution {
            weights: counts.iter().map(|&c| c as f64 / b).collect(),
            mean_delta: sums.iter().zip(&counts).map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect(),
        }
    }

    /// `D_rho * delta_hat`.
    pub fn weighted_delta(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.mean_delta).map(|(w, d)| w * d).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Ntk,
    /// Tabular limit: every pair only moves itself.
    Identity,
}

/// First-order prediction of the change of every Q value after one plain
/// gradient step of size `alpha` on the squared error of `batch`.
pub fn decomposition_predict(
    params: &NetworkParams,
    batch: &TdBatch,
    alpha: f64,
    env: &Env,
    kernel: Kernel,
) -> Result<Vec<f64>> {
    let index = PairIndex::for_env(env);
    let k = match kernel {
        Kernel::Ntk => super::ntk(params, index, env)?,
        Kernel::Identity => NtkMatrix::identity(index.len()),
    };
    Ok(decomposition_predict_with(&k, &BatchDistribution::from_batch(batch, index), alpha))
}

/// `alpha * K * D_rho * delta_hat` for a precomputed kernel.
pub fn decomposition_predict_with(k: &NtkMatrix, dist: &BatchDistribution, alpha: f64) -> Vec<f64> {
    k.mul_vec(&dist.weighted_delta()).into_iter().map(|v| alpha * v).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckRow {
    pub alpha: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub actual_norm: f64,
    pub predicted_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
    /// Times every step size was halved to avoid a rectifier kink.
    pub halvings: usize,
}

impl CheckReport {
    /// Absolute error at the first step size over that at the second.
    pub fn error_ratio(&self) -> f64 {
        self.rows[0].abs_error / self.rows[1].abs_error
    }
}

const MAX_HALVINGS: usize = 3;

/// Compares the first-order prediction against an actual sgd step on the
/// mse loss for every `alpha`, halving all step sizes while any hidden unit
/// changes sign on a batch input.
pub fn decomposition_check(params: &NetworkParams, batch: &TdBatch, alphas: &[f64], env: &Env) -> Result<CheckReport> {
    if alphas.len() < 2 {
        return Err(contract("decomposition check needs at least two step sizes"));
    }
    if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(contract("step sizes must be finite and non-negative"));
    }
    let index = PairIndex::for_env(env);
    let k = super::ntk(params, index, env)?;
    let dist = BatchDistribution::from_batch(batch, index);
    let obs: Vec<Vec<f64>> = batch.pairs.iter().map(|&(s, _)| env.encode(s)).collect();
    let samples: Vec<Sample<'_>> = batch
        .pairs
        .iter()
        .zip(&obs)
        .zip(&batch.targets)
        .map(|((&(_, a), o), &target)| Sample { obs: o, action: a.0, target })
        .collect();
    let (grad, _) = params.loss_grad(&samples, Loss::Mse)?;
    let q0 = q_snapshot(params, env);
    let mut batch_states: Vec<StateId> = batch.pairs.iter().map(|&(s, _)| s).collect();
    batch_states.sort();
    batch_states.dedup();

    let mut halvings = 0;
    loop {
        let scale = 0.5f64.powi(halvings as i32);
        let mut rows = Vec::with_capacity(alphas.len());
        let mut kink = None;
        for &alpha in alphas {
            let alpha = alpha * scale;
            let mut stepped = params.clone();
            stepped.flat_mut().iter_mut().zip(&grad).for_each(|(t, g)| *t -= alpha * g);
            if let Some(k) = kink_crossing(params, &stepped, env, &batch_states) {
                kink = Some(k);
                break;
            }
            let q1 = q_snapshot(&stepped, env);
            let actual: Vec<f64> = q1.values().iter().zip(q0.values()).map(|(a, b)| a - b).collect();
            let pred = decomposition_predict_with(&k, &dist, alpha);
            let abs_error = norm_diff(&actual, &pred);
            let actual_norm = norm(&actual);
            let rel_error = if abs_error == 0.0 { 0.0 } else { abs_error / actual_norm };
            rows.push(CheckRow { alpha, abs_error, rel_error, actual_norm, predicted_norm: norm(&pred) });
        }
        match kink {
            None => return Ok(CheckReport { rows, halvings }),
            Some((layer, unit, state)) if halvings == MAX_HALVINGS => {
                return Err(Error::KinkCrossing { halvings, layer, unit, state: state.0 })
            }
            Some(_) => halvings += 1,
        }
    }
}

/// First `(layer, unit, state)` among `states` whose pre-activation sign
/// differs between the two parameter vectors.
pub fn kink_crossing(
    before: &NetworkParams,
    after: &NetworkParams,
    env: &Env,
    states: &[StateId],
) -> Option<(usize, usize, StateId)> {
    let mut a0 = before.activations();
    let mut a1 = after.activations();
    for &s in states {
        let o = env.encode(s);
        before.forward_into(&o, &mut a0);
        after.forward_into(&o, &mut a1);
        for layer in 0..2 {
            let z0 = a0.pre_activations(layer);
            let z1 = a1.pre_activations(layer);
            if let Some(unit) = (0..z0.len()).find(|&u| (z0[u] > 0.0) != (z1[u] > 0.0)) {
                return Some((layer, unit, s));
            }
        }
    }
    None
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
