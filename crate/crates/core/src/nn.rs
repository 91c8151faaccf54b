//! Dense ReLU networks with hand-written reverse mode, masked softmax and Adam.
//!
//! Everything is `f64` and every reduction runs in a fixed order, so forward
//! and backward passes are bit-reproducible.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// One affine layer; `weight` is `out_dim × in_dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Layer {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (o, out) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *out = acc;
        }
    }
}

/// Parameter (or gradient) blocks of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Layer>,
}

impl Params {
    pub fn zeros(dims: &[usize]) -> Self {
        Params {
            layers: dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        if let Some(first) = self.layers.first() {
            dims.push(first.in_dim);
        }
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All values, layer by layer, weights before bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn from_flat(dims: &[usize], values: &[f64]) -> Result<Self> {
        let mut params = Params::zeros(dims);
        if values.len() != params.len() {
            return Err(Error::Dimension {
                expected: params.len(),
                got: values.len(),
            });
        }
        let mut it = values.iter().copied();
        for l in &mut params.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(params)
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in self.iter_mut() {
            *a *= k;
        }
    }

    /// Name of the first block holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        for (i, l) in self.layers.iter().enumerate() {
            if l.weight.iter().any(|x| !x.is_finite()) {
                return Some(format!("layer {i} weight"));
            }
            if l.bias.iter().any(|x| !x.is_finite()) {
                return Some(format!("layer {i} bias"));
            }
        }
        None
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(dims: &[usize], seed: u64) -> Result<Params> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Parameter(format!("invalid layer dims {dims:?}")));
    }
    let mut rng = rng::derive(seed, &[stream::INIT]);
    let mut params = Params::zeros(dims);
    for l in &mut params.layers {
        let limit = (6.0 / (l.in_dim + l.out_dim) as f64).sqrt();
        for w in &mut l.weight {
            *w = rng.random_range(-limit..limit);
        }
    }
    Ok(params)
}

/// Parameters plus a version counter so tapes from before an update are
/// rejected.
#[derive(Debug, Clone)]
pub struct Mlp {
    params: Params,
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

/// Activations recorded by a forward pass: the input and each hidden layer's
/// post-ReLU output, for every row of the batch.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    rows: usize,
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

impl Mlp {
    pub fn new(params: Params) -> Self {
        Mlp { params, version: 0 }
    }

    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        Ok(Mlp::new(init_params(dims, seed)?))
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut Params {
        self.version += 1;
        &mut self.params
    }

    pub fn in_dim(&self) -> usize {
        self.params.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.params.layers.last().expect("at least one layer").out_dim
    }

    fn check_input(&self, len: usize, rows: usize) -> Result<()> {
        if len != rows * self.in_dim() {
            return Err(Error::Dimension {
                expected: rows * self.in_dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Outputs for a batch of `rows` inputs laid out row-major, without
    /// recording a tape.
    pub fn predict(&self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.check_input(input.len(), rows)?;
        let mut x = input.to_vec();
        for (i, layer) in self.params.layers.iter().enumerate() {
            x = self.layer_forward(layer, &x, rows, i + 1 < self.params.layers.len());
        }
        Ok(x)
    }

    /// Like [`Mlp::predict`] but also returns the tape for [`Mlp::backward`].
    pub fn forward(&self, input: &[f64], rows: usize) -> Result<(Vec<f64>, Tape)> {
        self.check_input(input.len(), rows)?;
        let n = self.params.layers.len();
        let mut activations = Vec::with_capacity(n);
        activations.push(input.to_vec());
        for (i, layer) in self.params.layers.iter().enumerate() {
            let y = self.layer_forward(layer, activations.last().unwrap(), rows, i + 1 < n);
            activations.push(y);
        }
        let out = activations.pop().unwrap();
        Ok((
            out,
            Tape {
                version: self.version,
                rows,
                activations,
            },
        ))
    }

    fn layer_forward(&self, layer: &Layer, x: &[f64], rows: usize, relu: bool) -> Vec<f64> {
        let mut y = vec![0.0; rows * layer.out_dim];
        for r in 0..rows {
            let xr = &x[r * layer.in_dim..(r + 1) * layer.in_dim];
            let yr = &mut y[r * layer.out_dim..(r + 1) * layer.out_dim];
            layer.apply(xr, yr);
            if relu {
                for v in yr.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        y
    }

    /// Accumulates into `grads` the gradient of `Σ grad_out · output` with
    /// respect to every parameter.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64], grads: &mut Params) -> Result<()> {
        if tape.version != self.version {
            return Err(Error::StaleTape);
        }
        let rows = tape.rows;
        if grad_out.len() != rows * self.out_dim() {
            return Err(Error::Dimension {
                expected: rows * self.out_dim(),
                got: grad_out.len(),
            });
        }
        let mut delta = grad_out.to_vec();
        for (i, layer) in self.params.layers.iter().enumerate().rev() {
            let x = &tape.activations[i];
            let g = &mut grads.layers[i];
            let (ind, outd) = (layer.in_dim, layer.out_dim);
            for r in 0..rows {
                let xr = &x[r * ind..(r + 1) * ind];
                let dr = &delta[r * outd..(r + 1) * outd];
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let grow = &mut g.weight[o * ind..(o + 1) * ind];
                    for (gw, xi) in grow.iter_mut().zip(xr) {
                        *gw += d * xi;
                    }
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; rows * ind];
            for r in 0..rows {
                let dr = &delta[r * outd..(r + 1) * outd];
                let pr = &mut prev[r * ind..(r + 1) * ind];
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &layer.weight[o * ind..(o + 1) * ind];
                    for (p, w) in pr.iter_mut().zip(wrow) {
                        *p += d * w;
                    }
                }
                // ReLU: the recorded activation is zero exactly where the
                // pre-activation was ≤ 0, and the subgradient there is 0.
                for (p, a) in pr.iter_mut().zip(&x[r * ind..(r + 1) * ind]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(())
    }
}

/// Softmax over the legal entries of `logits`; illegal entries get exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    Ok(masked_log_softmax(logits, mask)?
        .iter()
        .map(|&lp| if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() })
        .collect())
}

/// Log-probabilities over legal entries; illegal entries are `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::Dimension {
            expected: mask.len(),
            got: logits.len(),
        });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptyMask);
    }
    let sum: f64 = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| (z - max).exp())
        .sum();
    let log_z = max + sum.ln();
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(&z, &m)| if m { z - log_z } else { f64::NEG_INFINITY })
        .collect())
}

/// Entropy of a distribution given its probabilities and log-probabilities.
pub fn entropy(probs: &[f64], log_probs: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(log_probs)
        .filter(|(&p, _)| p > 0.0)
        .map(|(p, lp)| p * lp)
        .sum::<f64>()
}

/// Gradient with respect to the logits of `a · log p[action] + b · H(p)`.
/// Illegal slots (probability 0) receive exactly 0.
pub fn policy_logit_grad(
    probs: &[f64],
    log_probs: &[f64],
    action: usize,
    a: f64,
    b: f64,
) -> Vec<f64> {
    let h = entropy(probs, log_probs);
    probs
        .iter()
        .zip(log_probs)
        .enumerate()
        .map(|(j, (&p, &lp))| {
            if p == 0.0 {
                return 0.0;
            }
            let dlogp = if j == action { 1.0 - p } else { -p };
            a * dlogp - b * p * (lp + h)
        })
        .collect()
}

/// Gradient with respect to the logits of `-c · log p[target]`.
pub fn cross_entropy_logit_grad(probs: &[f64], target: usize, c: f64) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| c * (p - if j == target { 1.0 } else { 0.0 }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// One bias-corrected update. A zero gradient leaves parameters unchanged
    /// when the moment buffers are zero.
    pub fn step(&mut self, mlp: &mut Mlp, grads: &Params) -> Result<()> {
        if let Some(block) = grads.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient in {block}")));
        }
        if grads.len() != self.m.len() || mlp.params.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: grads.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let params = mlp.params_mut();
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
