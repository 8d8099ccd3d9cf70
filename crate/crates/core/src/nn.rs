//! Dueling multilayer perceptron with hand-derived backpropagation.
//!
//! Architecture: `d_in -> h1 -> h2` with rectified-linear units, then a value
//! head `h2 -> 1` and an advantage head `h2 -> n_actions`, combined as
//! `Q(s,a) = V(s) + A(s,a) - mean_b A(s,b)`.
//!
//! Parameters live in one flat vector in this order:
//! `W1 (h1 x d_in, row-major), b1, W2 (h2 x h1), b2, Wv (h2), bv, Wa (n_actions x h2), ba`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, io_err, Error, Result};

/// Tag written next to serialized parameters; bump when the layout changes.
pub const FLATTEN_VERSION: &str = "dueling-mlp/v1";

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub d_in: usize,
    pub hidden: [usize; 2],
    pub n_actions: usize,
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wv: usize,
    bv: usize,
    wa: usize,
    ba: usize,
    len: usize,
}

impl Architecture {
    pub fn new(d_in: usize, n_actions: usize) -> Self {
        Architecture { d_in, hidden: [DEFAULT_HIDDEN, DEFAULT_HIDDEN], n_actions }
    }

    fn layout(&self) -> Layout {
        let [h1, h2] = self.hidden;
        let w1 = 0;
        let b1 = w1 + h1 * self.d_in;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let wv = b2 + h2;
        let bv = wv + h2;
        let wa = bv + 1;
        let ba = wa + self.n_actions * h2;
        Layout { w1, b1, w2, b2, wv, bv, wa, ba, len: ba + self.n_actions }
    }

    /// Total parameter count `P`.
    pub fn n_params(&self) -> usize {
        self.layout().len
    }

    /// Index of the value-head bias in the flat vector.
    pub fn value_bias_index(&self) -> usize {
        self.layout().bv
    }

    /// Index of the advantage-head bias for action `a`.
    pub fn advantage_bias_index(&self, a: usize) -> usize {
        self.layout().ba + a
    }

    /// Range of the advantage-head biases.
    pub fn advantage_bias_range(&self) -> std::ops::Range<usize> {
        let l = self.layout();
        l.ba..l.len
    }
}

/// Network weights as one flat vector plus the architecture that shapes it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    theta: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Activations {
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    adv: Vec<f64>,
    value: f64,
    q: Vec<f64>,
}

impl Activations {
    pub fn new(arch: &Architecture) -> Self {
        let [h1, h2] = arch.hidden;
        Activations {
            z1: vec![0.0; h1],
            h1: vec![0.0; h1],
            z2: vec![0.0; h2],
            h2: vec![0.0; h2],
            adv: vec![0.0; arch.n_actions],
            value: 0.0,
            q: vec![0.0; arch.n_actions],
        }
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Pre-activations of hidden layer `layer` (0 or 1).
    pub fn pre_activations(&self, layer: usize) -> &[f64] {
        if layer == 0 {
            &self.z1
        } else {
            &self.z2
        }
    }
}

/// Scratch for the backward pass.
#[derive(Debug, Clone)]
struct BackScratch {
    dz1: Vec<f64>,
    dz2: Vec<f64>,
    dadv: Vec<f64>,
}

impl NetworkParams {
    /// Glorot-uniform weights, zero biases; deterministic in `seed`.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = arch.layout();
        let [h1, h2] = arch.hidden;
        let mut theta = vec![0.0; l.len];
        let mut fill = |start: usize, fan_out: usize, fan_in: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut theta[start..start + fan_in * fan_out] {
                *w = rng.gen_range(-limit..limit);
            }
        };
        fill(l.w1, h1, arch.d_in);
        fill(l.w2, h2, h1);
        fill(l.wv, 1, h2);
        fill(l.wa, arch.n_actions, h2);
        NetworkParams { arch, theta }
    }

    pub fn zeros(arch: Architecture) -> Self {
        NetworkParams { arch, theta: vec![0.0; arch.n_params()] }
    }

    /// Rebuilds parameters from a flat vector in the documented order.
    pub fn from_flat(arch: Architecture, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != arch.n_params() {
            return Err(contract(format!(
                "architecture needs {} parameters, got {}",
                arch.n_params(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(contract("non-finite parameter"));
        }
        Ok(NetworkParams { arch, theta })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn flat(&self) -> &[f64] {
        &self.theta
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn activations(&self) -> Activations {
        Activations::new(&self.arch)
    }

    /// Forward pass into `act`. Inputs equal to zero are skipped in the first
    /// layer, which makes one-hot encodings cheap.
    pub fn forward_into(&self, obs: &[f64], act: &mut Activations) {
        let a = &self.arch;
        debug_assert_eq!(obs.len(), a.d_in);
        let l = a.layout();
        let [h1, h2] = a.hidden;
        let t = &self.theta;

        act.z1.copy_from_slice(&t[l.b1..l.b1 + h1]);
        for (j, &x) in obs.iter().enumerate() {
            if x != 0.0 {
                for i in 0..h1 {
                    act.z1[i] += t[l.w1 + i * a.d_in + j] * x;
                }
            }
        }
        for i in 0..h1 {
            act.h1[i] = act.z1[i].max(0.0);
        }

        for i in 0..h2 {
            let row = &t[l.w2 + i * h1..l.w2 + (i + 1) * h1];
            act.z2[i] = t[l.b2 + i] + dot(row, &act.h1);
            act.h2[i] = act.z2[i].max(0.0);
        }

        act.value = t[l.bv] + dot(&t[l.wv..l.wv + h2], &act.h2);
        let mut mean = 0.0;
        for k in 0..a.n_actions {
            let row = &t[l.wa + k * h2..l.wa + (k + 1) * h2];
            act.adv[k] = t[l.ba + k] + dot(row, &act.h2);
            mean += act.adv[k];
        }
        mean /= a.n_actions as f64;
        for k in 0..a.n_actions {
            act.q[k] = act.value + act.adv[k] - mean;
        }
    }

    /// Q values of every action for one observation.
    pub fn forward(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.arch.d_in {
            return Err(contract(format!("observation has length {}, expected {}", obs.len(), self.arch.d_in)));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(contract("non-finite observation"));
        }
        let mut act = self.activations();
        self.forward_into(obs, &mut act);
        Ok(act.q)
    }

    /// Adds `scale * d(sum_k dq[k] * Q_k)/d(theta)` to `grad`, using the
    /// activations of a prior `forward_into(obs)`.
    fn backward_accumulate(&self, obs: &[f64], act: &Activations, dq: &[f64], scale: f64, grad: &mut [f64], s: &mut BackScratch) {
        let a = &self.arch;
        let l = a.layout();
        let [h1, h2] = a.hidden;
        let t = &self.theta;
        let n = a.n_actions as f64;

        let dv: f64 = dq.iter().sum::<f64>() * scale;
        for k in 0..a.n_actions {
            s.dadv[k] = dq[k] * scale - dv / n;
        }

        grad[l.bv] += dv;
        for i in 0..h2 {
            grad[l.wv + i] += dv * act.h2[i];
            let mut d = dv * t[l.wv + i];
            for k in 0..a.n_actions {
                d += s.dadv[k] * t[l.wa + k * h2 + i];
            }
            s.dz2[i] = if act.z2[i] > 0.0 { d } else { 0.0 };
        }
        for k in 0..a.n_actions {
            let dk = s.dadv[k];
            grad[l.ba + k] += dk;
            if dk != 0.0 {
                axpy(dk, &act.h2, &mut grad[l.wa + k * h2..l.wa + (k + 1) * h2]);
            }
        }

        s.dz1.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..h2 {
            let d = s.dz2[i];
            if d == 0.0 {
                continue;
            }
            grad[l.b2 + i] += d;
            axpy(d, &act.h1, &mut grad[l.w2 + i * h1..l.w2 + (i + 1) * h1]);
            axpy(d, &t[l.w2 + i * h1..l.w2 + (i + 1) * h1], &mut s.dz1);
        }
        for i in 0..h1 {
            if act.z1[i] <= 0.0 {
                continue;
            }
            let d = s.dz1[i];
            grad[l.b1 + i] += d;
            let row = &mut grad[l.w1 + i * a.d_in..l.w1 + (i + 1) * a.d_in];
            for (j, &x) in obs.iter().enumerate() {
                if x != 0.0 {
                    row[j] += d * x;
                }
            }
        }
    }

    fn scratch(&self) -> BackScratch {
        let [h1, h2] = self.arch.hidden;
        BackScratch { dz1: vec![0.0; h1], dz2: vec![0.0; h2], dadv: vec![0.0; self.arch.n_actions] }
    }

    /// Exact gradient of `Q(obs, a)` with respect to the flat parameters.
    /// Rectifiers have subgradient 0 at the kink.
    pub fn grad_q(&self, obs: &[f64], a: usize) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params()];
        self.grad_q_into(obs, a, &mut grad);
        grad
    }

    /// [`NetworkParams::grad_q`] written into a caller buffer (overwritten).
    pub fn grad_q_into(&self, obs: &[f64], a: usize, grad: &mut [f64]) {
        assert!(a < self.arch.n_actions);
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut act = self.activations();
        self.forward_into(obs, &mut act);
        let mut dq = vec![0.0; self.arch.n_actions];
        dq[a] = 1.0;
        self.backward_accumulate(obs, &act, &dq, 1.0, grad, &mut self.scratch());
    }

    /// Adds `scale * sum_k dq[k] * grad Q_k(obs)` to `grad`. `act` must hold
    /// the result of `forward_into(obs)` on these parameters.
    pub fn accumulate_grad(&self, obs: &[f64], act: &Activations, dq: &[f64], scale: f64, grad: &mut [f64]) {
        assert_eq!(dq.len(), self.arch.n_actions);
        assert_eq!(grad.len(), self.n_params());
        self.backward_accumulate(obs, act, dq, scale, grad, &mut self.scratch());
    }

    /// Gradient of `(1/b) sum_i L(Q(obs_i, a_i) - target_i)` and the per-element
    /// residuals `Q - target`.
    pub fn loss_grad(&self, batch: &[Sample<'_>], loss: Loss) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grad = vec![0.0; self.n_params()];
        let residuals = self.loss_grad_into(batch, loss, &mut grad)?;
        Ok((grad, residuals))
    }

    /// [`NetworkParams::loss_grad`] into a caller buffer (overwritten).
    pub fn loss_grad_into(&self, batch: &[Sample<'_>], loss: Loss, grad: &mut [f64]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(contract("loss gradient of an empty batch"));
        }
        grad.iter_mut().for_each(|v| *v = 0.0);
        let scale = 1.0 / batch.len() as f64;
        let mut act = self.activations();
        let mut scratch = self.scratch();
        let mut dq = vec![0.0; self.arch.n_actions];
        let mut residuals = Vec::with_capacity(batch.len());
        for sample in batch {
            self.forward_into(sample.obs, &mut act);
            let e = act.q[sample.action] - sample.target;
            residuals.push(e);
            dq.iter_mut().for_each(|v| *v = 0.0);
            dq[sample.action] = loss.derivative(e);
            self.backward_accumulate(sample.obs, &act, &dq, scale, grad, &mut scratch);
        }
        Ok(residuals)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let doc = ParamsDocument {
            format: FLATTEN_VERSION.to_string(),
            architecture: ArchDescriptor {
                d_in: self.arch.d_in,
                widths: self.arch.hidden.to_vec(),
                n_actions: self.arch.n_actions,
                activation: "relu".to_string(),
            },
            params: self.theta.clone(),
        };
        let text = serde_json::to_string(&doc)?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Json(j) => Error::Parse { path: path.to_path_buf(), reason: j.to_string() },
            other => other,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        let doc = ParamsDocument {
            format: FLATTEN_VERSION.to_string(),
            architecture: ArchDescriptor {
                d_in: self.arch.d_in,
                widths: self.arch.hidden.to_vec(),
                n_actions: self.arch.n_actions,
                activation: "relu".to_string(),
            },
            params: self.theta.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ParamsDocument = serde_json::from_str(text)?;
        if doc.format != FLATTEN_VERSION {
            return Err(contract(format!("unsupported parameter format `{}`", doc.format)));
        }
        if doc.architecture.activation != "relu" {
            return Err(contract(format!("unsupported activation `{}`", doc.architecture.activation)));
        }
        let hidden: [usize; 2] = doc
            .architecture
            .widths
            .as_slice()
            .try_into()
            .map_err(|_| contract("expected exactly two hidden widths"))?;
        let arch = Architecture { d_in: doc.architecture.d_in, hidden, n_actions: doc.architecture.n_actions };
        Self::from_flat(arch, doc.params)
    }
}

#[derive(Serialize, Deserialize)]
struct ArchDescriptor {
    d_in: usize,
    widths: Vec<usize>,
    n_actions: usize,
    activation: String,
}

#[derive(Serialize, Deserialize)]
struct ParamsDocument {
    format: String,
    architecture: ArchDescriptor,
    params: Vec<f64>,
}

/// Four independent partial sums so the adds pipeline.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// One regression example: observation, action and fixed target.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub obs: &'a [f64],
    pub action: usize,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// `e^2 / 2`.
    Mse,
    /// Quadratic for `|e| <= 1`, linear beyond.
    Huber,
}

impl Loss {
    pub fn value(self, e: f64) -> f64 {
        match self {
            Loss::Mse => 0.5 * e * e,
            Loss::Huber if e.abs() <= 1.0 => 0.5 * e * e,
            Loss::Huber => e.abs() - 0.5,
        }
    }

    pub fn derivative(self, e: f64) -> f64 {
        match self {
            Loss::Mse => e,
            Loss::Huber => e.clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Plain gradient descent or bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        let moments = if kind == OptimizerKind::Adam { n_params } else { 0 };
        OptimizerState {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one descent step to `params` in place.
    pub fn step(&mut self, params: &mut NetworkParams, g: &[f64]) -> Result<()> {
        if g.len() != params.n_params() {
            return Err(contract(format!("gradient has length {}, expected {}", g.len(), params.n_params())));
        }
        self.step += 1;
        let theta = params.flat_mut();
        match self.kind {
            OptimizerKind::Sgd => axpy(-self.lr, g, theta),
            OptimizerKind::Adam => {
                if self.m.len() != g.len() {
                    return Err(contract("optimizer moments sized for a different network"));
                }
                let t = self.step as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                for i in 0..g.len() {
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}
