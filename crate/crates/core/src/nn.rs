//! Batched ReLU network used for training: fitting MLP students and
//! learning expert Q-functions. Trained weights are exported as a
//! [`ReluMlp`], whose scalar inference is the reference semantics.

use crate::policy::{Dense, ReluMlp, Task};
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// out x in
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub layers: Vec<Layer>,
}

/// Activations kept for the backward pass: inputs to each layer and the
/// pre-activations of each layer.
pub struct Cache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        self.pre.last().expect("non-empty network")
    }
}

impl Net {
    /// He-uniform weights, zero biases. `sizes` = [input, hidden..., output].
    pub fn he_uniform(sizes: &[usize], rng: &mut impl rand::Rng) -> Net {
        let layers = sizes
            .windows(2)
            .map(|d| {
                let limit = (6.0 / d[0] as f64).sqrt();
                Layer {
                    w: Array2::from_shape_fn((d[1], d[0]), |_| rng.random_range(-limit..limit)),
                    b: Array1::zeros(d[1]),
                }
            })
            .collect();
        Net { layers }
    }

    pub fn zeros_like(&self) -> Net {
        Net {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Cache {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.w.t()) + &layer.b;
            inputs.push(a);
            a = if i < last {
                z.mapv(|v| if v > 0.0 { v } else { 0.0 })
            } else {
                z.clone()
            };
            pre.push(z);
        }
        Cache { inputs, pre }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward(x).pre.pop().expect("non-empty network")
    }

    /// Gradients of a loss whose derivative w.r.t. the output is `d_out`.
    pub fn backward(&self, cache: &Cache, d_out: Array2<f64>) -> Net {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            let gw = delta.t().dot(&cache.inputs[i]);
            let gb = delta.sum_axis(Axis(0));
            grads.push(Layer { w: gw, b: gb });
            if i > 0 {
                let mut d_in = delta.dot(&self.layers[i].w);
                Zip::from(&mut d_in)
                    .and(&cache.pre[i - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = d_in;
            }
        }
        grads.reverse();
        Net { layers: grads }
    }

    /// Flattened parameters: per layer, `w` row-major then `b`.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for l in &mut self.layers {
            l.w.iter_mut()
                .chain(l.b.iter_mut())
                .for_each(|p| *p = *it.next().expect("enough values"));
        }
    }

    pub fn to_mlp(&self, task: Task) -> ReluMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| Dense {
                weights: l.w.outer_iter().map(|r| r.to_vec()).collect(),
                bias: l.b.to_vec(),
            })
            .collect();
        ReluMlp { layers, task }
    }

    pub fn from_mlp(mlp: &ReluMlp) -> Net {
        Net {
            layers: mlp
                .layers
                .iter()
                .map(|d| Layer {
                    w: Array2::from_shape_fn((d.n_out(), d.n_in()), |(i, j)| d.weights[i][j]),
                    b: Array1::from(d.bias.clone()),
                })
                .collect(),
        }
    }

    /// Polyak-free hard copy used for target networks.
    pub fn copy_from(&mut self, other: &Net) {
        self.layers.clone_from(&other.layers);
    }

    /// Rewrites the first layer so the network accepts raw inputs `x`
    /// instead of standardized `(x - mean) / scale`.
    pub fn fold_input_standardization(&mut self, mean: &[f64], scale: &[f64]) {
        let first = &mut self.layers[0];
        for mut row in first.w.outer_iter_mut() {
            for j in 0..row.len() {
                row[j] /= scale[j];
            }
        }
        let shift: Array1<f64> = first.w.dot(&Array1::from(mean.to_vec()));
        first.b -= &shift;
    }
}

/// Weighted softmax cross-entropy. Returns the loss and d loss / d logits.
pub fn weighted_cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
    weights: &[f64],
) -> (f64, Array2<f64>) {
    let total: f64 = weights.iter().sum();
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, row) in logits.outer_iter().enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let w = weights[i] / total;
        loss += w * (sum.ln() - (row[labels[i]] - max));
        for (k, e) in exps.iter().enumerate() {
            let p = e / sum;
            grad[(i, k)] = w * (p - if k == labels[i] { 1.0 } else { 0.0 });
        }
    }
    (loss, grad)
}

/// Weighted squared error summed over outputs.
pub fn weighted_mse(
    out: &Array2<f64>,
    targets: &Array2<f64>,
    weights: &[f64],
) -> (f64, Array2<f64>) {
    let total: f64 = weights.iter().sum();
    let diff = out - targets;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(out.raw_dim());
    for (i, row) in diff.outer_iter().enumerate() {
        let w = weights[i] / total;
        loss += w * row.iter().map(|d| d * d).sum::<f64>();
        grad.slice_mut(s![i, ..]).assign(&row.mapv(|d| 2.0 * w * d));
    }
    (loss, grad)
}

/// Adam with bias correction.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Net, grads: &Net) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for (l, g) in net.layers.iter_mut().zip(&grads.layers) {
            for (p, gv) in
                l.w.iter_mut()
                    .chain(l.b.iter_mut())
                    .zip(g.w.iter().chain(g.b.iter()))
            {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gv;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gv * gv;
                *p -= self.lr * (self.m[k] / bc1) / ((self.v[k] / bc2).sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

pub fn rows_to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    #[test]
    fn exported_mlp_matches_batched_forward() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let net = Net::he_uniform(&[3, 5, 4, 2], &mut rng);
        let mlp = net.to_mlp(Task::Classify);
        let x = Array2::from_shape_fn((6, 3), |_| rng.random_range(-2.0..2.0));
        let out = net.predict(x.view());
        for (i, row) in x.outer_iter().enumerate() {
            let y = mlp.forward(&row.to_vec()).unwrap();
            for k in 0..2 {
                assert!((y[k] - out[(i, k)]).abs() < 1e-12);
            }
        }
        assert_eq!(Net::from_mlp(&mlp), net);
    }

    #[test]
    fn folding_standardization_preserves_outputs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut net = Net::he_uniform(&[2, 4, 3], &mut rng);
        let (mean, scale) = ([0.5, -3.0], [2.0, 0.01]);
        let raw = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
        let std = Array2::from_shape_fn((5, 2), |(i, j)| (raw[(i, j)] - mean[j]) / scale[j]);
        let before = net.predict(std.view());
        net.fold_input_standardization(&mean, &scale);
        let after = net.predict(raw.view());
        assert!((before - after).iter().all(|d| d.abs() < 1e-9));
    }
}
