use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected layer; `weights` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Uniform in `[-k, k]`, `k = 1 / sqrt(fan_in)`, weights then bias.
    pub fn uniform(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut SimRng) -> Self {
        let k = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.uniform_range(-k, k)).collect();
        let bias = (0..out_dim).map(|_| rng.uniform_range(-k, k)).collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        }
    }

    pub fn macs(&self) -> usize {
        self.in_dim * self.out_dim
    }

    /// Writes the pre-activation into `pre` and the activation into `out`.
    pub fn forward(&self, input: &[f64], pre: &mut [f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.in_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let z = row.iter().zip(input).fold(self.bias[o], |acc, (w, x)| acc + w * x);
            pre[o] = z;
            out[o] = self.activation.apply(z);
        }
    }

    /// Accumulates parameter gradients and writes `dL/d input` into `grad_in`.
    /// `grad_out` is `dL/d output` and is overwritten with `dL/d pre`.
    pub fn backward(
        &self,
        input: &[f64],
        pre: &[f64],
        grad_out: &mut [f64],
        grad: &mut LayerGrad,
        grad_in: &mut [f64],
    ) {
        for (g, &z) in grad_out.iter_mut().zip(pre) {
            *g *= self.activation.derivative(z);
        }
        grad_in.iter_mut().for_each(|g| *g = 0.0);
        for o in 0..self.out_dim {
            let delta = grad_out[o];
            if delta == 0.0 {
                continue;
            }
            grad.bias[o] += delta;
            let row = o * self.in_dim;
            for i in 0..self.in_dim {
                grad.weights[row + i] += delta * input[i];
                grad_in[i] += delta * self.weights[row + i];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }
}

/// A stack of dense layers with the activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    // inputs[i] feeds layer i; inputs[len] is the network output
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("non-empty stack")
    }
}

impl LayerStack {
    /// Hidden layers use `hidden`, the last layer is linear.
    pub fn init(widths: &[usize], hidden: Activation, rng: &mut SimRng) -> Self {
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n { Activation::Identity } else { hidden };
                DenseLayer::uniform(w[0], w[1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].in_dim];
        w.extend(self.layers.iter().map(|l| l.out_dim));
        w
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn macs(&self) -> usize {
        self.layers.iter().map(DenseLayer::macs).sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, input: &[f64]) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(input.to_vec());
        for layer in &self.layers {
            let mut z = vec![0.0; layer.out_dim];
            let mut a = vec![0.0; layer.out_dim];
            layer.forward(inputs.last().unwrap(), &mut z, &mut a);
            pre.push(z);
            inputs.push(a);
        }
        ForwardCache { inputs, pre }
    }

    pub fn infer(&self, input: &[f64]) -> Vec<f64> {
        self.forward(input).inputs.pop().unwrap()
    }

    /// Backpropagates `grad_output` through the cached pass, accumulating
    /// into `grads`; returns `dL/d input`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grads: &mut StackGrad) -> Vec<f64> {
        let mut upstream = grad_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let mut grad_in = vec![0.0; layer.in_dim];
            layer.backward(&cache.inputs[i], &cache.pre[i], &mut upstream, &mut grads.layers[i], &mut grad_in);
            upstream = grad_in;
        }
        upstream
    }

    /// Multiplies output `o` by `factors[o]`. Only valid when the last layer
    /// is linear.
    pub fn scale_outputs(&mut self, factors: &[f64]) {
        let last = self.layers.last_mut().expect("non-empty stack");
        debug_assert_eq!(last.activation, Activation::Identity);
        debug_assert_eq!(factors.len(), last.out_dim);
        for (o, &f) in factors.iter().enumerate() {
            last.weights[o * last.in_dim..(o + 1) * last.in_dim].iter_mut().for_each(|w| *w *= f);
            last.bias[o] *= f;
        }
    }

    pub fn zero_grad(&self) -> StackGrad {
        StackGrad {
            layers: self.layers.iter().map(LayerGrad::zeros_like).collect(),
        }
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(&mut f);
            l.bias.iter_mut().for_each(&mut f);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackGrad {
    pub layers: Vec<LayerGrad>,
}

impl StackGrad {
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_emit_bias() {
        let mut stack = LayerStack {
            layers: vec![
                DenseLayer::zeros(2, 4, Activation::Relu),
                DenseLayer::zeros(4, 2, Activation::Identity),
            ],
        };
        stack.layers[1].bias = vec![0.5, -1.5];
        for input in [[0.0, 0.0], [3.0, -7.0], [-1e3, 1e3]] {
            assert_eq!(stack.infer(&input), vec![0.5, -1.5]);
        }
    }

    #[test]
    fn macs_for_default_widths() {
        let mut rng = SimRng::new(0, 0);
        let s = LayerStack::init(&[2, 32, 32, 32, 2], Activation::Relu, &mut rng);
        assert_eq!(s.macs(), 64 + 1024 + 1024 + 64);
        assert_eq!(s.widths(), vec![2, 32, 32, 32, 2]);
        assert_eq!(s.layers[3].activation, Activation::Identity);
        assert_eq!(s.layers[0].activation, Activation::Relu);
    }

    #[test]
    fn identity_layer_passes_gradient_through() {
        let mut layer = DenseLayer::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            layer.weights[i * 3 + i] = 1.0;
        }
        let stack = LayerStack { layers: vec![layer] };
        let cache = stack.forward(&[0.2, -0.4, 1.0]);
        let mut g = stack.zero_grad();
        let gin = stack.backward(&cache, &[1.0, 2.0, 3.0], &mut g);
        assert_eq!(gin, vec![1.0, 2.0, 3.0]);
    }
}
