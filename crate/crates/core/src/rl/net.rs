//! A small dense feedforward network with hand-written forward and backward
//! passes, plus an Adam optimizer over a flat parameter layout. The flat
//! layout doubles as the coordinate system for finite-difference checks.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Logistic,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Logistic => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// Weights are row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub layers: Vec<Layer>,
}

/// Per-layer activations of one forward pass; `activations[0]` is the input.
pub struct ForwardTrace {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("nonempty trace")
    }
}

impl NeuralNet {
    /// Xavier-uniform initialization; the output layer is shrunk so that an
    /// untrained policy starts near the squash midpoint.
    pub fn xavier<R: Rng>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "a network needs input and output dimensions");
        let mut layers = Vec::new();
        for (l, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let last = l == dims.len() - 2;
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() * if last { 0.01 } else { 1.0 };
            let weights =
                (0..fan_in * fan_out).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect();
            layers.push(Layer {
                in_dim: fan_in,
                out_dim: fan_out,
                weights,
                biases: vec![0.0; fan_out],
                activation: if last { output } else { hidden },
            });
        }
        NeuralNet { layers }
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Self {
        let mut layers = Vec::new();
        for (l, pair) in dims.windows(2).enumerate() {
            let last = l == dims.len() - 2;
            layers.push(Layer {
                in_dim: pair[0],
                out_dim: pair[1],
                weights: vec![0.0; pair[0] * pair[1]],
                biases: vec![0.0; pair[1]],
                activation: if last { output } else { hidden },
            });
        }
        NeuralNet { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim).unwrap_or(0)
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut current = input.to_vec();
        for layer in &self.layers {
            current = layer_forward(layer, &current);
        }
        current
    }

    /// Scalar convenience for the 1-output heads used here.
    pub fn forward_scalar(&self, input: &[f64]) -> f64 {
        self.forward(input)[0]
    }

    pub fn forward_trace(&self, input: &[f64]) -> ForwardTrace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for layer in &self.layers {
            let next = layer_forward(layer, activations.last().unwrap());
            activations.push(next);
        }
        ForwardTrace { activations }
    }

    /// Accumulate parameter gradients for one sample given the gradient of
    /// the loss with respect to the network output.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &[f64], grads: &mut Gradients) {
        debug_assert_eq!(grads.flat.len(), self.param_count());
        let mut upstream = output_grad.to_vec();
        let mut offset = self.param_count();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            offset -= layer.param_count();
            let output = &trace.activations[l + 1];
            let input = &trace.activations[l];
            let mut dz = vec![0.0; layer.out_dim];
            for o in 0..layer.out_dim {
                dz[o] = upstream[o] * layer.activation.derivative_from_output(output[o]);
            }
            let (dw, db) = grads.flat[offset..offset + layer.param_count()]
                .split_at_mut(layer.in_dim * layer.out_dim);
            let mut downstream = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let drow = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    drow[i] += dz[o] * input[i];
                    downstream[i] += row[i] * dz[o];
                }
                db[o] += dz[o];
            }
            upstream = downstream;
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn param(&self, index: usize) -> f64 {
        let (layer, local) = self.locate(index);
        let l = &self.layers[layer];
        if local < l.weights.len() {
            l.weights[local]
        } else {
            l.biases[local - l.weights.len()]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (layer, local) = self.locate(index);
        let l = &mut self.layers[layer];
        if local < l.weights.len() {
            l.weights[local] = value;
        } else {
            let i = local - l.weights.len();
            l.biases[i] = value;
        }
    }

    fn locate(&self, index: usize) -> (usize, usize) {
        let mut remaining = index;
        for (l, layer) in self.layers.iter().enumerate() {
            if remaining < layer.param_count() {
                return (l, remaining);
            }
            remaining -= layer.param_count();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|p| p.is_finite()))
    }

    /// Validate internal consistency of loaded weights.
    pub fn check_shape(&self) -> Result<(), String> {
        if self.layers.is_empty() {
            return Err("network has no layers".into());
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.in_dim * layer.out_dim {
                return Err(format!(
                    "layer {l}: {}x{} needs {} weights, found {}",
                    layer.out_dim,
                    layer.in_dim,
                    layer.in_dim * layer.out_dim,
                    layer.weights.len()
                ));
            }
            if layer.biases.len() != layer.out_dim {
                return Err(format!(
                    "layer {l}: expected {} biases, found {}",
                    layer.out_dim,
                    layer.biases.len()
                ));
            }
            if l > 0 && self.layers[l - 1].out_dim != layer.in_dim {
                return Err(format!(
                    "layer {l}: input {} does not match previous output {}",
                    layer.in_dim,
                    self.layers[l - 1].out_dim
                ));
            }
        }
        Ok(())
    }
}

impl Layer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

fn layer_forward(layer: &Layer, input: &[f64]) -> Vec<f64> {
    debug_assert_eq!(input.len(), layer.in_dim);
    let mut out = Vec::with_capacity(layer.out_dim);
    for o in 0..layer.out_dim {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let z: f64 =
            row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + layer.biases[o];
        out.push(layer.activation.apply(z));
    }
    out
}

/// Flat gradient buffer aligned with the network's parameter indexing.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub flat: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &NeuralNet) -> Self {
        Gradients { flat: vec![0.0; net.param_count()] }
    }

    pub fn reset(&mut self) {
        self.flat.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.flat.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.flat.iter().all(|g| g.is_finite())
    }
}

/// Adam with bias correction over the flat parameter layout.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, param_count: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// Descend along `grads`; pass the negated gradient to ascend.
    pub fn step(&mut self, net: &mut NeuralNet, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, &g) in grads.flat.iter().enumerate() {
            self.m[idx] = self.beta1 * self.m[idx] + (1.0 - self.beta1) * g;
            self.v[idx] = self.beta2 * self.v[idx] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[idx] / bc1;
            let v_hat = self.v[idx] / bc2;
            let update = self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            net.set_param(idx, net.param(idx) - update);
        }
    }

}

/// One-parameter Adam for the learned exploration scale.
#[derive(Debug, Clone)]
pub struct ScalarAdam {
    pub learning_rate: f64,
    step: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(learning_rate: f64) -> Self {
        ScalarAdam { learning_rate, step: 0, m: 0.0, v: 0.0 }
    }

    pub fn step(&mut self, value: &mut f64, grad: f64) {
        self.step += 1;
        self.m = 0.9 * self.m + 0.1 * grad;
        self.v = 0.999 * self.v + 0.001 * grad * grad;
        let m_hat = self.m / (1.0 - 0.9f64.powi(self.step as i32));
        let v_hat = self.v / (1.0 - 0.999f64.powi(self.step as i32));
        *value -= self.learning_rate * m_hat / (v_hat.sqrt() + 1e-8);
    }
}
