//! Dense Q-network: a two-layer state embedding
//! `h = sigmoid(W2 · relu(W1 s + b1) + b2)` followed by a linear head
//! `Q = W3 h + b3`, with hand-derived backpropagation of the squared TD loss.
//!
//! Weights are kept input-major in memory (`w[j * out + i]` is the weight
//! from input `j` to output `i`) so the forward pass accumulates whole
//! columns. Every output is still summed sequentially over its inputs, which
//! keeps results bit-reproducible. Checkpoints store the conventional
//! row-major `[out, in]` layout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "qnet-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Embedding {
    Sigmoid,
    /// Ablation: relu in place of the sigmoid on the embedding layer.
    Relu,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// out = b + Σ_j wt[j] * x[j], accumulated in j order.
fn affine(wt: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = b.len();
    out.copy_from_slice(b);
    for (j, &xj) in x.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(&wt[j * n..(j + 1) * n]) {
            *o += w * xj;
        }
    }
}

fn transpose(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// Parameter tensors of a [`QNetwork`], also used for gradients and moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl Params {
    fn zeros_like(other: &Params) -> Self {
        Self {
            w1: vec![0.0; other.w1.len()],
            b1: vec![0.0; other.b1.len()],
            w2: vec![0.0; other.w2.len()],
            b2: vec![0.0; other.b2.len()],
            w3: vec![0.0; other.w3.len()],
            b3: vec![0.0; other.b3.len()],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

pub type Gradients = Params;

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub actions: usize,
    pub embedding: Embedding,
    pub params: Params,
}

/// One regression example: move `Q(state)[action]` toward `target`.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub target: f64,
}

#[derive(Clone, Debug, Default)]
struct Activations {
    z1: Vec<f64>,
    r: Vec<f64>,
    z2: Vec<f64>,
    h: Vec<f64>,
}

impl QNetwork {
    pub fn zeros(input: usize, hidden1: usize, hidden2: usize, actions: usize) -> Self {
        Self {
            input,
            hidden1,
            hidden2,
            actions,
            embedding: Embedding::Sigmoid,
            params: Params {
                w1: vec![0.0; input * hidden1],
                b1: vec![0.0; hidden1],
                w2: vec![0.0; hidden1 * hidden2],
                b2: vec![0.0; hidden2],
                w3: vec![0.0; hidden2 * actions],
                b3: vec![0.0; actions],
            },
        }
    }

    /// He-uniform fan-in scaling for the relu layer, Xavier-uniform for the
    /// other two, zero biases.
    pub fn init(input: usize, hidden1: usize, hidden2: usize, actions: usize, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(input, hidden1, hidden2, actions);
        let he = (6.0 / input as f64).sqrt();
        let xavier2 = (6.0 / (hidden1 + hidden2) as f64).sqrt();
        let xavier3 = (6.0 / (hidden2 + actions) as f64).sqrt();
        for w in &mut net.params.w1 {
            *w = rng.random_range(-he..=he);
        }
        for w in &mut net.params.w2 {
            *w = rng.random_range(-xavier2..=xavier2);
        }
        for w in &mut net.params.w3 {
            *w = rng.random_range(-xavier3..=xavier3);
        }
        net
    }

    /// Weight from input `j` to unit `i` of layer `layer` (1, 2 or 3).
    pub fn weight(&self, layer: usize, i: usize, j: usize) -> f64 {
        match layer {
            1 => self.params.w1[j * self.hidden1 + i],
            2 => self.params.w2[j * self.hidden2 + i],
            3 => self.params.w3[j * self.actions + i],
            _ => panic!("layer must be 1, 2 or 3"),
        }
    }

    pub fn set_weight(&mut self, layer: usize, i: usize, j: usize, value: f64) {
        let slot = match layer {
            1 => &mut self.params.w1[j * self.hidden1 + i],
            2 => &mut self.params.w2[j * self.hidden2 + i],
            3 => &mut self.params.w3[j * self.actions + i],
            _ => panic!("layer must be 1, 2 or 3"),
        };
        *slot = value;
    }

    fn check_input(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.input {
            return Err(Error::Shape {
                expected: self.input,
                got: s.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, s: &[f64], act: &mut Activations) {
        act.z1.resize(self.hidden1, 0.0);
        act.r.resize(self.hidden1, 0.0);
        act.z2.resize(self.hidden2, 0.0);
        act.h.resize(self.hidden2, 0.0);
        affine(&self.params.w1, &self.params.b1, s, &mut act.z1);
        for (r, &z) in act.r.iter_mut().zip(&act.z1) {
            *r = z.max(0.0);
        }
        affine(&self.params.w2, &self.params.b2, &act.r, &mut act.z2);
        for (h, &z) in act.h.iter_mut().zip(&act.z2) {
            *h = match self.embedding {
                Embedding::Sigmoid => sigmoid(z),
                Embedding::Relu => z.max(0.0),
            };
        }
    }

    pub fn embed(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_input(s)?;
        let mut act = Activations::default();
        self.forward(s, &mut act);
        Ok(act.h)
    }

    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_input(s)?;
        let mut act = Activations::default();
        self.forward(s, &mut act);
        let mut q = vec![0.0; self.actions];
        affine(&self.params.w3, &self.params.b3, &act.h, &mut q);
        Ok(q)
    }

    /// Mean squared TD loss over the batch and its gradient. Only the chosen
    /// action's output receives gradient.
    pub fn backward(&self, batch: &[Sample<'_>]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Usage("backward needs a non-empty batch".into()));
        }
        let mut g = Params::zeros_like(&self.params);
        let mut act = Activations::default();
        let mut dh = vec![0.0; self.hidden2];
        let mut dz2 = vec![0.0; self.hidden2];
        let mut dz1 = vec![0.0; self.hidden1];
        let scale = 1.0 / batch.len() as f64;
        let (h1, h2, na) = (self.hidden1, self.hidden2, self.actions);
        let mut loss = 0.0;

        for (k, sample) in batch.iter().enumerate() {
            self.check_input(sample.state)?;
            let a = sample.action;
            if a >= na {
                return Err(Error::Shape { expected: na, got: a + 1 });
            }
            if !sample.target.is_finite() {
                return Err(Error::Numeric(format!("non-finite target at batch index {k}")));
            }
            self.forward(sample.state, &mut act);
            let mut q = self.params.b3[a];
            for (j, &hj) in act.h.iter().enumerate() {
                q += self.params.w3[j * na + a] * hj;
            }
            let err = sample.target - q;
            if !err.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite Q value at batch index {k} (q={q})"
                )));
            }
            loss += err * err;
            let dq = -2.0 * err * scale;

            g.b3[a] += dq;
            for j in 0..h2 {
                g.w3[j * na + a] += dq * act.h[j];
                dh[j] = dq * self.params.w3[j * na + a];
            }
            for j in 0..h2 {
                let deriv = match self.embedding {
                    Embedding::Sigmoid => act.h[j] * (1.0 - act.h[j]),
                    Embedding::Relu => {
                        if act.z2[j] > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                dz2[j] = dh[j] * deriv;
                g.b2[j] += dz2[j];
            }
            for i in 0..h1 {
                let ri = act.r[i];
                let row = &self.params.w2[i * h2..(i + 1) * h2];
                let grow = &mut g.w2[i * h2..(i + 1) * h2];
                let mut dr = 0.0;
                for ((gw, &w), &d) in grow.iter_mut().zip(row).zip(&dz2) {
                    *gw += ri * d;
                    dr += w * d;
                }
                dz1[i] = if act.z1[i] > 0.0 { dr } else { 0.0 };
                g.b1[i] += dz1[i];
            }
            for (j, &sj) in sample.state.iter().enumerate() {
                for (gw, &d) in g.w1[j * h1..(j + 1) * h1].iter_mut().zip(&dz1) {
                    *gw += sj * d;
                }
            }
        }
        loss *= scale;
        if !loss.is_finite() || !g.all_finite() {
            return Err(Error::Numeric(format!("non-finite loss or gradient (loss={loss})")));
        }
        Ok((loss, g))
    }

    /// Loss only, for finite differences.
    pub fn loss(&self, batch: &[Sample<'_>]) -> Result<f64> {
        let mut total = 0.0;
        for s in batch {
            let q = self.q_values(s.state)?;
            let err = s.target - q[s.action];
            total += err * err;
        }
        Ok(total / batch.len() as f64)
    }

    pub fn copy_from(&mut self, other: &QNetwork) {
        self.params.clone_from(&other.params);
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            embedding: self.embedding,
            shapes: CheckpointShapes {
                w1: [self.hidden1, self.input],
                b1: [self.hidden1],
                w2: [self.hidden2, self.hidden1],
                b2: [self.hidden2],
                w3: [self.actions, self.hidden2],
                b3: [self.actions],
            },
            w1: transpose(&self.params.w1, self.input, self.hidden1),
            b1: self.params.b1.clone(),
            w2: transpose(&self.params.w2, self.hidden1, self.hidden2),
            b2: self.params.b2.clone(),
            w3: transpose(&self.params.w3, self.hidden2, self.actions),
            b3: self.params.b3.clone(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "unsupported checkpoint format {:?}",
                c.format
            )));
        }
        let [h1, d] = c.shapes.w1;
        let [h2, h1b] = c.shapes.w2;
        let [a, h2b] = c.shapes.w3;
        let consistent = h1 == h1b
            && h2 == h2b
            && c.shapes.b1 == [h1]
            && c.shapes.b2 == [h2]
            && c.shapes.b3 == [a]
            && c.w1.len() == h1 * d
            && c.w2.len() == h2 * h1
            && c.w3.len() == a * h2
            && c.b1.len() == h1
            && c.b2.len() == h2
            && c.b3.len() == a;
        if !consistent {
            return Err(Error::Config("checkpoint shapes are inconsistent".into()));
        }
        let net = Self {
            input: d,
            hidden1: h1,
            hidden2: h2,
            actions: a,
            embedding: c.embedding,
            params: Params {
                w1: transpose(&c.w1, h1, d),
                b1: c.b1.clone(),
                w2: transpose(&c.w2, h2, h1),
                b2: c.b2.clone(),
                w3: transpose(&c.w3, a, h2),
                b3: c.b3.clone(),
            },
        };
        if !net.params.all_finite() {
            return Err(Error::Numeric("checkpoint holds non-finite parameters".into()));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_checkpoint())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointShapes {
    pub w1: [usize; 2],
    pub b1: [usize; 1],
    pub w2: [usize; 2],
    pub b2: [usize; 1],
    pub w3: [usize; 2],
    pub b3: [usize; 1],
}

/// On-disk network parameters; weight matrices are row-major `[out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub embedding: Embedding,
    pub shapes: CheckpointShapes,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

/// Max over parameters of |analytic - numeric| / max(1, |numeric|), with
/// central differences of step `fd_step`.
pub fn compare_gradients(
    net: &QNetwork,
    batch: &[Sample<'_>],
    analytic: &Gradients,
    fd_step: f64,
) -> Result<f64> {
    if !(1e-8..=1e-4).contains(&fd_step) {
        return Err(Error::Usage(format!("fd_step {fd_step} outside [1e-8, 1e-4]")));
    }
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for t in 0..6 {
        for i in 0..analytic.tensors()[t].len() {
            let orig = probe.params.tensors()[t][i];
            probe.params.tensors_mut()[t][i] = orig + fd_step;
            let up = probe.loss(batch)?;
            probe.params.tensors_mut()[t][i] = orig - fd_step;
            let down = probe.loss(batch)?;
            probe.params.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * fd_step);
            let err = (analytic.tensors()[t][i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

pub fn grad_check(net: &QNetwork, batch: &[Sample<'_>], fd_step: f64) -> Result<f64> {
    let (_, analytic) = net.backward(batch)?;
    compare_gradients(net, batch, &analytic, fd_step)
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Params,
    v: Params,
}

impl Adam {
    pub fn new(net: &QNetwork, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Params::zeros_like(&net.params),
            v: Params::zeros_like(&net.params),
        }
    }

    pub fn apply(&mut self, net: &mut QNetwork, grads: &Gradients) -> Result<()> {
        let shapes_match = net
            .params
            .tensors()
            .iter()
            .zip(grads.tensors())
            .all(|(p, g)| p.len() == g.len())
            && self.m.len() == net.params.len();
        if !shapes_match {
            return Err(Error::Shape {
                expected: net.params.len(),
                got: grads.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let params = net.params.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                if !update.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite optimizer update at step {}",
                        self.step
                    )));
                }
                p[i] -= update;
            }
        }
        Ok(())
    }
}
