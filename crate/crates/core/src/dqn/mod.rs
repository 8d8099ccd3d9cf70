//! Deep Q-learning: replay, exploration schedule, target/double-Q targets
//! and the per-iteration minibatch update.

pub mod config;
pub mod replay;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{sample_step, Env};
use crate::error::{contract, Error, Result};
use crate::mdp::{argmax, greedy_policy, q_distance, value_iteration, ActionId, QTable, StateId, TransitionModel};
use crate::metrics::MetricsLog;
use crate::nn::{Activations, Architecture, NetworkParams, OptimizerState};

pub use config::{parse_pair, CaseBinding, TrainConfig};
pub use replay::{ReplayBuffer, ReplayEntry};

/// Linear exploration schedule: `initial` at step 0 down to `final` after
/// `fraction * total_steps` steps, constant afterwards.
pub fn epsilon(t: u64, cfg: &TrainConfig) -> f64 {
    let horizon = (cfg.exploration_fraction * cfg.total_steps as f64).floor();
    let frac = if horizon <= 0.0 { 1.0 } else { (t as f64 / horizon).min(1.0) };
    (1.0 - frac) * cfg.exploration_initial + frac * cfg.exploration_final
}

/// Epsilon-greedy choice; ties in the greedy branch go to the lowest index.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], eps: f64, rng: &mut R) -> ActionId {
    if rng.gen::<f64>() < eps {
        ActionId(rng.gen_range(0..q_values.len()))
    } else {
        ActionId(argmax(q_values))
    }
}

/// Bootstrap targets for a batch of `(reward, next_obs)`:
/// `r + gamma * max_a' Q'(s',a')`, or with `double_q`
/// `r + gamma * Q'(s', argmax_a' Q(s',a'))`. No terminal masking.
pub fn compute_targets(
    batch: &[(f64, &[f64])],
    online: &NetworkParams,
    target_net: &NetworkParams,
    gamma: f64,
    double_q: bool,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(contract("targets of an empty batch"));
    }
    let mut act_t = target_net.activations();
    let mut act_o = online.activations();
    Ok(batch
        .iter()
        .map(|&(r, next_obs)| target_value(r, next_obs, online, target_net, gamma, double_q, &mut act_o, &mut act_t))
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn target_value(
    r: f64,
    next_obs: &[f64],
    online: &NetworkParams,
    target_net: &NetworkParams,
    gamma: f64,
    double_q: bool,
    act_o: &mut Activations,
    act_t: &mut Activations,
) -> f64 {
    target_net.forward_into(next_obs, act_t);
    let bootstrap = if double_q {
        online.forward_into(next_obs, act_o);
        act_t.q()[argmax(act_o.q())]
    } else {
        act_t.q().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    r + gamma * bootstrap
}

/// One sampled batch element as seen by the diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchElement {
    pub state: StateId,
    pub action: ActionId,
    pub next_state: StateId,
    pub reward: f64,
    /// Realized TD-error `target - Q(s,a)` before the update.
    pub delta: f64,
    /// Iteration that generated the transition.
    pub entry_step: u64,
    /// Cumulative number of times `state` has been trained on, this batch included.
    pub visits: u64,
    /// The transition was the last one before an environment reset.
    pub at_reset: bool,
}

/// Q value of a tracked pair around one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedQ {
    pub state: StateId,
    pub action: ActionId,
    pub before: f64,
    pub after: f64,
}

impl TrackedQ {
    pub fn delta_q(&self) -> f64 {
        self.after - self.before
    }
}

/// Per-iteration diagnostics emitted by [`Trainer::train_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 0-based index of the iteration.
    pub iteration: u64,
    pub state: StateId,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateId,
    pub epsilon: f64,
    /// Target network copied from the online network at the end of this step.
    pub synced: bool,
    /// Environment returned to its initial state at the end of this step.
    pub reset: bool,
    /// Empty during warmup.
    pub batch: Vec<BatchElement>,
    pub tracked: Vec<TrackedQ>,
}

/// Full mutable state of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    env: Env,
    model: TransitionModel,
    observations: Vec<Vec<f64>>,
    online: NetworkParams,
    target: NetworkParams,
    opt: OptimizerState,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    state: StateId,
    step: u64,
    visit_counts: Vec<u64>,
    grad: Vec<f64>,
    act: Activations,
    /// Target-network Q rows for every state, refreshed lazily after a sync.
    target_q: Vec<f64>,
    target_q_fresh: bool,
    /// Per-update scratch: one forward pass per distinct state in a batch.
    acts: Vec<Activations>,
    slot_of: Vec<usize>,
    dq_acc: Vec<f64>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let env = cfg.env;
        let arch = Architecture { d_in: env.obs_dim(), hidden: [cfg.hidden, cfg.hidden], n_actions: env.n_actions() };
        // one stream for network init, another for the environment/agent
        let online = NetworkParams::init(arch, cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, arch.n_params());
        Ok(Trainer {
            model: env.build_model(),
            observations: env.encode_all(),
            target: online.clone(),
            act: online.activations(),
            target_q: vec![0.0; env.n_pairs()],
            target_q_fresh: false,
            acts: Vec::new(),
            slot_of: vec![usize::MAX; env.n_states()],
            dq_acc: Vec::new(),
            grad: vec![0.0; arch.n_params()],
            online,
            opt,
            buffer: ReplayBuffer::new(cfg.buffer_size),
            rng,
            state: env.initial_state(),
            step: 0,
            visit_counts: vec![0; env.n_states()],
            env,
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn model(&self) -> &TransitionModel {
        &self.model
    }

    pub fn online(&self) -> &NetworkParams {
        &self.online
    }

    pub fn target(&self) -> &NetworkParams {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.opt
    }

    /// Number of completed iterations.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn current_state(&self) -> StateId {
        self.state
    }

    /// How often each state has appeared in a sampled batch.
    pub fn visit_counts(&self) -> &[u64] {
        &self.visit_counts
    }

    pub fn observation(&self, s: StateId) -> &[f64] {
        &self.observations[s.0]
    }

    /// Online network evaluated on every state.
    pub fn q_table(&self) -> QTable {
        crate::diagnostics::q_snapshot(&self.online, &self.env)
    }

    fn online_q(&mut self, s: StateId, a: ActionId) -> f64 {
        self.online.forward_into(&self.observations[s.0], &mut self.act);
        self.act.q()[a.0]
    }

    /// One environment step, a minibatch update once past warmup, then the
    /// target sync and reset schedules.
    pub fn train_iteration(&mut self) -> Result<StepRecord> {
        let iteration = self.step;
        let eps = epsilon(iteration.min(self.cfg.total_steps), &self.cfg);

        let s = self.state;
        self.online.forward_into(&self.observations[s.0], &mut self.act);
        let a = select_action(self.act.q(), eps, &mut self.rng);
        let (next, reward) = sample_step(&self.model, s, a, &mut self.rng);
        self.buffer.push(ReplayEntry {
            obs: self.observations[s.0].clone(),
            action: a,
            reward,
            next_obs: self.observations[next.0].clone(),
            state: s,
            next_state: next,
            step: iteration,
        });

        let tracked_pairs = self.cfg.tracked.clone();
        let before: Vec<f64> = tracked_pairs.iter().map(|&(ts, ta)| self.online_q(ts, ta)).collect();

        let mut batch = Vec::new();
        if iteration >= self.cfg.warmup {
            batch = self.update()?;
        }

        self.step += 1;
        let synced = self.step % self.cfg.target_update == 0;
        if synced {
            self.target.clone_from(&self.online);
            self.target_q_fresh = false;
        }
        self.state = next;
        let reset = self.step % self.cfg.reset_period == 0;
        if reset {
            self.state = self.env.initial_state();
        }

        let tracked = tracked_pairs
            .iter()
            .zip(before)
            .map(|(&(ts, ta), b)| TrackedQ { state: ts, action: ta, before: b, after: self.online_q(ts, ta) })
            .collect();

        Ok(StepRecord {
            iteration,
            state: s,
            action: a,
            reward,
            next_state: next,
            epsilon: eps,
            synced,
            reset,
            batch,
            tracked,
        })
    }

    /// Samples a batch, computes targets and applies one optimizer step.
    ///
    /// Equivalent to [`NetworkParams::loss_grad`] on the batch, but every
    /// distinct state is evaluated and backpropagated once with the summed
    /// per-action loss derivatives of its samples.
    fn update(&mut self) -> Result<Vec<BatchElement>> {
        let slots = self.buffer.sample_slots(self.cfg.batch_size, &mut self.rng)?;
        let gamma = self.cfg.gamma;
        let n_actions = self.env.n_actions();
        if !self.target_q_fresh {
            for (st, obs) in self.observations.iter().enumerate() {
                self.target.forward_into(obs, &mut self.act);
                self.target_q[st * n_actions..(st + 1) * n_actions].copy_from_slice(self.act.q());
            }
            self.target_q_fresh = true;
        }

        let mut distinct = Vec::new();
        for &slot in &slots {
            let e = self.buffer.get(slot);
            for st in [e.state.0, e.next_state.0] {
                if self.slot_of[st] == usize::MAX {
                    self.slot_of[st] = distinct.len();
                    distinct.push(st);
                }
            }
        }
        while self.acts.len() < distinct.len() {
            self.acts.push(self.online.activations());
        }
        for (k, &st) in distinct.iter().enumerate() {
            self.online.forward_into(&self.observations[st], &mut self.acts[k]);
        }

        self.dq_acc.clear();
        self.dq_acc.resize(distinct.len() * n_actions, 0.0);
        let mut out = Vec::with_capacity(slots.len());
        for &slot in &slots {
            let e = self.buffer.get(slot);
            let row = &self.target_q[e.next_state.0 * n_actions..(e.next_state.0 + 1) * n_actions];
            let bootstrap = if self.cfg.double_q {
                row[argmax(self.acts[self.slot_of[e.next_state.0]].q())]
            } else {
                row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let target = e.reward + gamma * bootstrap;
            let k = self.slot_of[e.state.0];
            let residual = self.acts[k].q()[e.action.0] - target;
            self.dq_acc[k * n_actions + e.action.0] += self.cfg.loss.derivative(residual);
            out.push(BatchElement {
                state: e.state,
                action: e.action,
                next_state: e.next_state,
                reward: e.reward,
                delta: -residual,
                entry_step: e.step,
                visits: 0,
                at_reset: (e.step + 1) % self.cfg.reset_period == 0,
            });
        }

        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / slots.len() as f64;
        for (k, &st) in distinct.iter().enumerate() {
            let dq = &self.dq_acc[k * n_actions..(k + 1) * n_actions];
            if dq.iter().any(|&d| d != 0.0) {
                self.online.accumulate_grad(&self.observations[st], &self.acts[k], dq, scale, &mut self.grad);
            }
            self.slot_of[st] = usize::MAX;
        }
        if self.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Contract(format!("non-finite gradient at iteration {}", self.step)));
        }
        self.opt.step(&mut self.online, &self.grad)?;

        for el in &out {
            self.visit_counts[el.state.0] += 1;
        }
        for el in &mut out {
            el.visits = self.visit_counts[el.state.0];
        }
        Ok(out)
    }
}

/// Observer of a training run. Hooks see the trainer read-only.
pub trait TrainHook {
    fn on_start(&mut self, _trainer: &Trainer) -> Result<()> {
        Ok(())
    }

    fn on_step(&mut self, _trainer: &Trainer, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    /// Called at iteration 0, every `snapshot_every` iterations and at the end.
    fn on_snapshot(&mut self, _trainer: &Trainer, _q: &QTable) -> Result<()> {
        Ok(())
    }
}

/// What a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub final_params: NetworkParams,
    pub metrics: MetricsLog,
    pub q_opt: QTable,
    pub buffer_len: usize,
    pub buffer_inserted: u64,
    pub visit_counts: Vec<u64>,
}

/// Runs `cfg.total_steps` iterations, recording `||Q - Q*||` and related
/// metrics at every snapshot and invoking `hooks` along the way.
pub fn run_training(cfg: &TrainConfig, hooks: &mut [&mut dyn TrainHook]) -> Result<RunArtifacts> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let q_opt = value_iteration(trainer.model(), cfg.discount(), 1e-9, 100_000)?.q;
    let opt_policy = greedy_policy(&q_opt);
    let mut metrics = MetricsLog::default();
    let mut td_abs_sum = 0.0;
    let mut td_count = 0u64;

    let wrap = |iteration: u64, e: Error| match e {
        Error::Hook { .. } => e,
        other => Error::Hook { iteration, message: other.to_string() },
    };

    for h in hooks.iter_mut() {
        h.on_start(&trainer).map_err(|e| wrap(0, e))?;
    }

    let snapshot = |trainer: &Trainer,
                        hooks: &mut [&mut dyn TrainHook],
                        metrics: &mut MetricsLog,
                        td: (f64, u64)|
     -> Result<()> {
        let it = trainer.step();
        let q = trainer.q_table();
        let env = trainer.env();
        let policy = greedy_policy(&q);
        let free: Vec<usize> = (0..env.n_states()).filter(|&s| !env.is_absorbing(StateId(s))).collect();
        let agree = free.iter().filter(|&&s| opt_policy.is_optimal(StateId(s), policy.action(StateId(s)))).count();
        metrics.push(it, "q_distance", q_distance(&q, &q_opt)?);
        metrics.push(it, "epsilon", epsilon(it.min(trainer.cfg.total_steps), &trainer.cfg));
        metrics.push(it, "greedy_agreement", agree as f64 / free.len().max(1) as f64);
        if td.1 > 0 {
            metrics.push(it, "mean_abs_td", td.0 / td.1 as f64);
        }
        for h in hooks.iter_mut() {
            h.on_snapshot(trainer, &q).map_err(|e| wrap(it, e))?;
        }
        metrics.push_q(it, q);
        Ok(())
    };

    snapshot(&trainer, hooks, &mut metrics, (0.0, 0))?;
    while trainer.step() < cfg.total_steps {
        let record = trainer.train_iteration()?;
        for el in &record.batch {
            td_abs_sum += el.delta.abs();
            td_count += 1;
        }
        for h in hooks.iter_mut() {
            h.on_step(&trainer, &record).map_err(|e| wrap(record.iteration, e))?;
        }
        if trainer.step() % cfg.snapshot_every == 0 || trainer.step() == cfg.total_steps {
            snapshot(&trainer, hooks, &mut metrics, (td_abs_sum, td_count))?;
            td_abs_sum = 0.0;
            td_count = 0;
        }
    }

    Ok(RunArtifacts {
        final_params: trainer.online().clone(),
        metrics,
        q_opt,
        buffer_len: trainer.buffer().len(),
        buffer_inserted: trainer.buffer().inserted(),
        visit_counts: trainer.visit_counts().to_vec(),
    })
}
