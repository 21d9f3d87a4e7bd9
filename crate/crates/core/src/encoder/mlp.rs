//! Small dense networks with hand-derived reverse mode.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

/// Applied elementwise to the last layer's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputTransform {
    Exp,
    Softplus,
    Tanh,
    Identity,
}

impl OutputTransform {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            OutputTransform::Exp => z.exp(),
            OutputTransform::Softplus => softplus(z),
            OutputTransform::Tanh => z.tanh(),
            OutputTransform::Identity => z,
        }
    }

    /// d(apply)/dz given the pre-activation `z` and output `y`.
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            OutputTransform::Exp => y,
            OutputTransform::Softplus => sigmoid(z),
            OutputTransform::Tanh => 1.0 - y * y,
            OutputTransform::Identity => 1.0,
        }
    }
}

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive `y`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[outputs, inputs]`; weights are row-major.
    pub shape: [usize; 2],
    #[serde(rename = "values")]
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Layer {
            shape: [outputs, inputs],
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Layer::zeros(inputs, outputs, activation);
        layer
            .weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-limit..limit));
        layer
    }

    fn forward(&self, x: &[f64], z: &mut Vec<f64>) {
        let [rows, cols] = self.shape;
        z.clear();
        z.extend((0..rows).map(|r| {
            let w = &self.weights[r * cols..(r + 1) * cols];
            self.bias[r] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        }));
    }
}

/// A dense network with a named output transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    pub transform: OutputTransform,
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer, then the final pre-transform output.
    inputs: Vec<Vec<f64>>,
    pre_transform: Vec<f64>,
    pub output: Vec<f64>,
}

impl MlpHead {
    /// Hidden layers use tanh; the last layer is linear and zero-initialized,
    /// so a fresh head outputs `transform(out_bias)` for every input.
    pub fn new<R: Rng>(sizes: &[usize], transform: OutputTransform, out_bias: &[f64], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let n = sizes.len() - 1;
        let mut layers: Vec<Layer> = (0..n)
            .map(|i| {
                if i + 1 < n {
                    Layer::glorot(sizes[i], sizes[i + 1], Activation::Tanh, rng)
                } else {
                    Layer::zeros(sizes[i], sizes[i + 1], Activation::Identity)
                }
            })
            .collect();
        let last = layers.last_mut().unwrap();
        for (b, &v) in last.bias.iter_mut().zip(out_bias.iter().cycle()) {
            *b = v;
        }
        MlpHead { transform, layers }
    }

    pub fn zeros(sizes: &[usize], transform: OutputTransform) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 < n {
                    Activation::Tanh
                } else {
                    Activation::Identity
                };
                Layer::zeros(sizes[i], sizes[i + 1], act)
            })
            .collect();
        MlpHead { transform, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.shape[1])
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.shape[0])
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Checks that layer shapes chain and buffers match their shapes.
    pub fn check(&self, name: &str) -> Result<()> {
        let shape_err = |detail: String| Error::Shape {
            head: name.to_string(),
            detail,
        };
        if self.layers.is_empty() {
            return Err(shape_err("no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let [rows, cols] = l.shape;
            if l.weights.len() != rows * cols || l.bias.len() != rows {
                return Err(shape_err(format!(
                    "layer {i}: shape {rows}x{cols} but {} weights / {} biases",
                    l.weights.len(),
                    l.bias.len()
                )));
            }
            if i > 0 && self.layers[i - 1].shape[0] != cols {
                return Err(shape_err(format!(
                    "layer {i} expects {cols} inputs, previous layer gives {}",
                    self.layers[i - 1].shape[0]
                )));
            }
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &[f64]) -> MlpCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let mut z = Vec::new();
        for layer in &self.layers {
            layer.forward(&cur, &mut z);
            inputs.push(std::mem::take(&mut cur));
            cur = match layer.activation {
                Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
                Activation::Identity => z.clone(),
            };
        }
        let output = cur.iter().map(|&v| self.transform.apply(v)).collect();
        MlpCache {
            inputs,
            pre_transform: cur,
            output,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).output
    }

    /// Parameter gradient (in [`MlpHead::params`] order) and input gradient,
    /// given the gradient of the loss with respect to the transformed output.
    pub fn backward(&self, cache: &MlpCache, upstream: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(&cache.pre_transform)
            .zip(&cache.output)
            .map(|((g, &z), &y)| g * self.transform.derivative(z, y))
            .collect();
        let mut offset = self.param_count();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let [rows, cols] = layer.shape;
            let x = &cache.inputs[li];
            if layer.activation == Activation::Tanh {
                // the layer's output is the next layer's input (or the head output)
                let out = cache.inputs.get(li + 1).unwrap_or(&cache.pre_transform);
                delta.iter_mut().zip(out).for_each(|(d, y)| *d *= 1.0 - y * y);
            }
            offset -= rows * cols + rows;
            let (gw, gb) = grad[offset..offset + rows * cols + rows].split_at_mut(rows * cols);
            for r in 0..rows {
                let d = delta[r];
                gb[r] = d;
                if d != 0.0 {
                    gw[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .zip(x)
                        .for_each(|(g, xi)| *g = d * xi);
                }
            }
            let mut next = vec![0.0; cols];
            for r in 0..rows {
                let d = delta[r];
                if d != 0.0 {
                    let w = &layer.weights[r * cols..(r + 1) * cols];
                    next.iter_mut().zip(w).for_each(|(n, wi)| *n += d * wi);
                }
            }
            delta = next;
        }
        (grad, delta)
    }

    /// Flattened parameters: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter vector length");
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric_grad(head: &MlpHead, x: &[f64], upstream: &[f64]) -> Vec<f64> {
        let base = head.params();
        let h = 1e-5;
        let loss = |p: &[f64]| {
            let mut m = head.clone();
            m.set_params(p);
            m.forward(x).iter().zip(upstream).map(|(a, b)| a * b).sum::<f64>()
        };
        (0..base.len())
            .map(|i| {
                let mut p = base.clone();
                p[i] += h;
                let up = loss(&p);
                p[i] -= 2.0 * h;
                (up - loss(&p)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn zero_head_outputs_transform_of_zero() {
        let h = MlpHead::zeros(&[4, 8, 3], OutputTransform::Exp);
        assert_eq!(h.forward(&[1.0, -2.0, 0.5, 3.0]), vec![1.0; 3]);
        assert_eq!(h.param_count(), 4 * 8 + 8 + 8 * 3 + 3);
    }

    #[test]
    fn gradient_matches_finite_differences_for_each_transform() {
        for (seed, transform) in [
            OutputTransform::Exp,
            OutputTransform::Softplus,
            OutputTransform::Tanh,
            OutputTransform::Identity,
        ]
        .into_iter()
        .enumerate()
        {
            let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
            let mut head = MlpHead::new(&[5, 6, 6, 3], transform, &[0.1], &mut rng);
            let mut p = head.params();
            p.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
            head.set_params(&p);
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let up: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (g, _) = head.backward(&head.forward_cached(&x), &up);
            let n = numeric_grad(&head, &x, &up);
            for (a, b) in g.iter().zip(&n) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
                assert!(rel < 1e-4, "{transform:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn single_linear_layer_gradient_is_outer_product() {
        let mut head = MlpHead::zeros(&[3, 2], OutputTransform::Identity);
        head.set_params(&[0.5, -1.0, 2.0, 1.5, 0.0, -0.5, 0.1, 0.2]);
        let x = [1.0, 2.0, -1.0];
        let up = [3.0, -2.0];
        let (g, gx) = head.backward(&head.forward_cached(&x), &up);
        assert_eq!(g, vec![3.0, 6.0, -3.0, -2.0, -4.0, 2.0, 3.0, -2.0]);
        assert_eq!(gx, vec![3.0 * 0.5 - 2.0 * 1.5, -3.0, 6.0 + 1.0]);
    }

    #[test]
    fn shape_check_names_head() {
        let mut head = MlpHead::zeros(&[3, 4, 2], OutputTransform::Identity);
        head.layers[1].shape = [2, 5];
        head.layers[1].weights = vec![0.0; 10];
        let err = head.check("beta").unwrap_err().to_string();
        assert!(err.contains("beta"), "{err}");
    }

    #[test]
    fn softplus_inverse() {
        for y in [0.01, 0.5, 3.0, 12.0, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-9);
        }
    }
}
