//! Two-hidden-layer perceptron with a scalar output, trained by backprop.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Dense layer; `weights` is row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut z = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                z += w * v;
            }
            out.push(z);
        }
    }
}

/// Q-value approximator. Hidden layers use `activation`, the output is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub activation: Activation,
    pub layers: Vec<Layer>,
}

/// Gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

impl QNetwork {
    /// Uniform Xavier initialization, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes, activation);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "network needs an input and an output size");
        assert_eq!(*sizes.last().unwrap(), 1, "Q-network output must be scalar");
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self { activation, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        s.push(1);
        s
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(self.input_dim(), x.len()));
        }
        let mut cur = x.to_vec();
        let mut next = Vec::with_capacity(64);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            if i != last {
                for v in next.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    /// Mean squared error `mean((y - q(x))^2)` and its gradient.
    pub fn loss_and_gradients(&self, inputs: &[&[f64]], targets: &[f64]) -> Result<(f64, Gradients)> {
        assert_eq!(inputs.len(), targets.len());
        if inputs.is_empty() {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        let n = inputs.len() as f64;
        let mut grads = Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        };
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        let mut post: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        for (x, &y) in inputs.iter().zip(targets) {
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch(self.input_dim(), x.len()));
            }
            for (i, layer) in self.layers.iter().enumerate() {
                let input: &[f64] = if i == 0 { x } else { &post[i - 1] };
                let mut z = Vec::with_capacity(layer.outputs);
                layer.forward_into(input, &mut z);
                let a = if i == last {
                    z.clone()
                } else {
                    z.iter().map(|&v| self.activation.apply(v)).collect()
                };
                pre[i] = z;
                post[i] = a;
            }
            let q = post[last][0];
            let err = q - y;
            loss += err * err;

            // dL/dz for the output layer
            let mut delta = vec![2.0 * err / n];
            for i in (0..=last).rev() {
                let layer = &self.layers[i];
                let input: &[f64] = if i == 0 { x } else { &post[i - 1] };
                let g = &mut grads.layers[i];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, v) in row.iter_mut().zip(input) {
                        *gw += d * v;
                    }
                }
                if i > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += w * delta[o];
                        }
                    }
                    for (j, p) in prev.iter_mut().enumerate() {
                        *p *= self.activation.derivative(pre[i - 1][j], post[i - 1][j]);
                    }
                    delta = prev;
                }
            }
        }
        Ok((loss / n, grads))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| Error::json("checkpoint", e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let net: Self =
            serde_json::from_str(&raw).map_err(|e| Error::json(path.display().to_string(), e))?;
        for (i, l) in net.layers.iter().enumerate() {
            let chained = i == 0 || net.layers[i - 1].outputs == l.inputs;
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs || !chained {
                return Err(Error::InvalidParameter(format!(
                    "{}: layer {i} has inconsistent shape",
                    path.display()
                )));
            }
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Applies gradient steps; Adam keeps per-parameter moment estimates.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step(&mut self, net: &mut QNetwork, grads: &Gradients) {
        let g = grads.flatten();
        let mut params = net.params();
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, gi) in params.iter_mut().zip(&g) {
                    *p -= self.learning_rate * gi;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != g.len() {
                    self.m = vec![0.0; g.len()];
                    self.v = vec![0.0; g.len()];
                    self.t = 0;
                }
                self.t += 1;
                let c1 = 1.0 - Self::BETA1.powi(self.t as i32);
                let c2 = 1.0 - Self::BETA2.powi(self.t as i32);
                for i in 0..g.len() {
                    self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g[i];
                    self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + Self::EPS);
                }
            }
        }
        net.set_params(&params);
    }
}
