//! Dense tanh layers with optional batch normalization and inverted dropout.
//!
//! Batches are column-major: each column of an input matrix is one sample.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct BatchNorm {
    pub gamma: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub running_mean: DVector<f64>,
    pub running_var: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Layer {
    pub w: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Mlp {
    pub layers: Vec<Layer>,
}

pub(crate) struct LayerCache {
    input: DMatrix<f64>,
    act: DMatrix<f64>,
    xhat: Option<DMatrix<f64>>,
    inv_std: Option<DVector<f64>>,
    mask: Option<DMatrix<f64>>,
    /// Batch mean and unbiased variance, for the running statistics.
    pub batch_stats: Option<(DVector<f64>, DVector<f64>)>,
}

fn add_column(m: &mut DMatrix<f64>, c: &DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        col += c.column(0);
    }
}

impl Mlp {
    pub fn init<R: Rng>(input_dim: usize, hidden: &[usize], batch_norm: bool, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut fan_in = input_dim;
        for &out in hidden {
            let bound = 1.0 / (fan_in as f64).sqrt();
            layers.push(Layer {
                w: DMatrix::from_fn(out, fan_in, |_, _| rng.random_range(-bound..bound)),
                b: DMatrix::from_fn(out, 1, |_, _| rng.random_range(-bound..bound)),
                bn: batch_norm.then(|| BatchNorm {
                    gamma: DMatrix::from_element(out, 1, 1.0),
                    beta: DMatrix::zeros(out, 1),
                    running_mean: DVector::zeros(out),
                    running_var: DVector::from_element(out, 1.0),
                }),
            });
            fan_in = out;
        }
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.nrows())
    }

    /// Evaluation-mode pass: running statistics, no dropout.
    pub fn forward_eval(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = x.clone();
        for layer in &self.layers {
            let mut z = &layer.w * &h;
            add_column(&mut z, &layer.b);
            z.apply(|v| *v = v.tanh());
            if let Some(bn) = &layer.bn {
                for (j, mut row) in z.row_iter_mut().enumerate() {
                    let inv = 1.0 / (bn.running_var[j] + BN_EPS).sqrt();
                    let (g, b, m) = (bn.gamma[(j, 0)], bn.beta[(j, 0)], bn.running_mean[j]);
                    row.apply(|v| *v = g * (*v - m) * inv + b);
                }
            }
            h = z;
        }
        h
    }

    /// Training-mode pass with batch statistics and dropout rate `dropout`.
    pub fn forward_train<R: Rng>(
        &self,
        x: &DMatrix<f64>,
        dropout: f64,
        rng: &mut R,
    ) -> (DMatrix<f64>, Vec<LayerCache>) {
        let n = x.ncols() as f64;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let mut z = &layer.w * &h;
            add_column(&mut z, &layer.b);
            z.apply(|v| *v = v.tanh());
            let act = z.clone();
            let mut cache = LayerCache {
                input: h,
                act,
                xhat: None,
                inv_std: None,
                mask: None,
                batch_stats: None,
            };
            if let Some(bn) = &layer.bn {
                let rows = z.nrows();
                let mut mean = DVector::zeros(rows);
                let mut inv_std = DVector::zeros(rows);
                let mut unbiased = DVector::zeros(rows);
                let mut xhat = z.clone();
                for j in 0..rows {
                    let row = z.row(j);
                    let m = row.sum() / n;
                    let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                    mean[j] = m;
                    inv_std[j] = 1.0 / (var + BN_EPS).sqrt();
                    unbiased[j] = if n > 1.0 { var * n / (n - 1.0) } else { var };
                    let (g, b) = (bn.gamma[(j, 0)], bn.beta[(j, 0)]);
                    for c in 0..z.ncols() {
                        let xh = (z[(j, c)] - m) * inv_std[j];
                        xhat[(j, c)] = xh;
                        z[(j, c)] = g * xh + b;
                    }
                }
                cache.xhat = Some(xhat);
                cache.inv_std = Some(inv_std);
                cache.batch_stats = Some((mean, unbiased));
            }
            if dropout > 0.0 {
                let keep = 1.0 - dropout;
                let mask = DMatrix::from_fn(z.nrows(), z.ncols(), |_, _| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                z.component_mul_assign(&mask);
                cache.mask = Some(mask);
            }
            caches.push(cache);
            h = z;
        }
        (h, caches)
    }

    /// Gradients for every parameter (per layer: w, b, then gamma, beta when
    /// normalized) given the gradient of the loss with respect to the output.
    pub fn backward(&self, caches: &[LayerCache], grad_out: DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut grads: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out;
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let mut layer_grads = Vec::with_capacity(4);
            if let Some(mask) = &cache.mask {
                g.component_mul_assign(mask);
            }
            let mut bn_grads = None;
            if let (Some(bn), Some(xhat), Some(inv_std)) = (&layer.bn, &cache.xhat, &cache.inv_std)
            {
                let n = g.ncols() as f64;
                let mut dgamma = DMatrix::zeros(g.nrows(), 1);
                let mut dbeta = DMatrix::zeros(g.nrows(), 1);
                for j in 0..g.nrows() {
                    let gamma = bn.gamma[(j, 0)];
                    let mut sum_dy = 0.0;
                    let mut sum_dy_xhat = 0.0;
                    for c in 0..g.ncols() {
                        sum_dy += g[(j, c)];
                        sum_dy_xhat += g[(j, c)] * xhat[(j, c)];
                    }
                    dgamma[(j, 0)] = sum_dy_xhat;
                    dbeta[(j, 0)] = sum_dy;
                    // dxhat = gamma·dy; fold the constant into the usual formula
                    let k = gamma * inv_std[j] / n;
                    for c in 0..g.ncols() {
                        g[(j, c)] = k * (n * g[(j, c)] - sum_dy - xhat[(j, c)] * sum_dy_xhat);
                    }
                }
                bn_grads = Some((dgamma, dbeta));
            }
            g.zip_apply(&cache.act, |d, a| *d *= 1.0 - a * a);
            layer_grads.push(&g * cache.input.transpose());
            layer_grads.push(DMatrix::from_fn(g.nrows(), 1, |j, _| g.row(j).sum()));
            if let Some((dgamma, dbeta)) = bn_grads {
                layer_grads.push(dgamma);
                layer_grads.push(dbeta);
            }
            g = layer.w.transpose() * &g;
            grads.push(layer_grads);
        }
        grads.into_iter().rev().flatten().collect()
    }

    pub fn update_running_stats(&mut self, caches: &[LayerCache]) {
        for (layer, cache) in self.layers.iter_mut().zip(caches) {
            if let (Some(bn), Some((mean, var))) = (&mut layer.bn, &cache.batch_stats) {
                bn.running_mean = &bn.running_mean * (1.0 - BN_MOMENTUM) + mean * BN_MOMENTUM;
                bn.running_var = &bn.running_var * (1.0 - BN_MOMENTUM) + var * BN_MOMENTUM;
            }
        }
    }

    pub fn params(&self) -> Vec<&DMatrix<f64>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.w);
            out.push(&l.b);
            if let Some(bn) = &l.bn {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.w);
            out.push(&mut l.b);
            if let Some(bn) = &mut l.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }
}

/// Adam with the usual moment decay rates.
#[derive(Debug, Clone)]
pub(crate) struct Adam {
    lr: f64,
    t: i32,
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(lr: f64, shapes: &[&DMatrix<f64>]) -> Self {
        let zeros = |m: &&DMatrix<f64>| DMatrix::zeros(m.nrows(), m.ncols());
        Adam {
            lr,
            t: 0,
            m: shapes.iter().map(zeros).collect(),
            v: shapes.iter().map(zeros).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut DMatrix<f64>>, grads: &[DMatrix<f64>]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for k in 0..p.len() {
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                p[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
            }
        }
    }
}
