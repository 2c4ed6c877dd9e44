//! Fully connected LeakyReLU network with a single linear output.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_in x fan_out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub leaky_slope: f64,
}

/// Intermediates of a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug)]
pub struct MlpCache {
    /// Input of every layer; `inputs[0]` is the encoded batch.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }
}

impl Mlp {
    /// Kaiming-uniform hidden weights, fan-in scaled output weights, zero biases.
    pub fn new(input: usize, hidden: usize, hidden_layers: usize, leaky_slope: f64, rng: &mut impl Rng) -> Self {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden, hidden_layers));
        widths.push(1);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = if i == last {
                    (3.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / ((1.0 + leaky_slope * leaky_slope) * fan_in as f64)).sqrt()
                };
                DenseLayer {
                    weight: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers, leaky_slope }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn activate(&self, z: &Array2<f64>) -> Array2<f64> {
        let s = self.leaky_slope;
        z.mapv(|v| if v >= 0.0 { v } else { s * v })
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array1<f64>, MlpCache) {
        let mut inputs = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let (hidden, out) = self.layers.split_at(self.layers.len() - 1);
        for layer in hidden {
            let z = inputs.last().unwrap().dot(&layer.weight) + &layer.bias;
            inputs.push(self.activate(&z));
            pre.push(z);
        }
        let out = &out[0];
        let y = inputs.last().unwrap().dot(&out.weight) + &out.bias;
        (y.column(0).to_owned(), MlpCache { inputs, pre })
    }

    /// Gradients of `Σ g_out·y` for every layer and for the input batch.
    pub fn backward(&self, cache: &MlpCache, g_out: ArrayView1<f64>) -> (Vec<DenseLayer>, Array2<f64>) {
        let s = self.leaky_slope;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = g_out.to_owned().insert_axis(Axis(1));
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            grads.push(DenseLayer {
                weight: input.t().dot(&g),
                bias: g.sum_axis(Axis(0)),
            });
            let mut g_in = g.dot(&layer.weight.t());
            if i > 0 {
                // Right-limit slope at the kink.
                g_in.zip_mut_with(&cache.pre[i - 1], |gi, &z| {
                    if z < 0.0 {
                        *gi *= s
                    }
                });
            }
            g = g_in;
        }
        grads.reverse();
        (grads, g)
    }
}
