//! Matérn 3/2 covariance with per-feature lengthscales.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matern32 {
    pub signal_var: f64,
    pub lengthscales: Vec<f64>,
}

impl Matern32 {
    pub fn new(signal_var: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(signal_var > 0.0 && signal_var.is_finite()) {
            return Err(Error::Config(format!(
                "signal variance {signal_var} must be positive"
            )));
        }
        if lengthscales.is_empty() || lengthscales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config("lengthscales must be positive".into()));
        }
        Ok(Matern32 {
            signal_var,
            lengthscales,
        })
    }

    pub fn isotropic(signal_var: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Matern32::new(signal_var, vec![lengthscale; dim])
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Scaled Euclidean distance. Inputs must already have the kernel's dimension.
    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let d = (a - b) / l;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    #[inline]
    pub fn from_distance(&self, r: f64) -> f64 {
        let s = SQRT3 * r;
        self.signal_var * (1.0 + s) * (-s).exp()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() || x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: if x.len() != self.dim() {
                    x.len()
                } else {
                    y.len()
                },
                context: "kernel input".into(),
            });
        }
        Ok(self.from_distance(self.distance(x, y)))
    }

    /// Covariance between the rows of `a` and the rows of `b`.
    pub fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let ra = rows(a);
        let rb = rows(b);
        DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
            self.from_distance(self.distance(&ra[i], &rb[j]))
        })
    }

    /// Gram matrix of the rows of `x`, without jitter.
    pub fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let r = rows(x);
        let n = x.nrows();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.signal_var;
            for j in 0..i {
                let v = self.from_distance(self.distance(&r[i], &r[j]));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// Closed-form Matérn 3/2 value for `x`, `y` under `params`.
pub fn matern32(x: &[f64], y: &[f64], params: &Matern32) -> Result<f64> {
    params.eval(x, y)
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Cholesky of `k + jitter·I`, escalating the jitter tenfold up to three times.
/// Returns the factor and the jitter that succeeded.
pub fn jittered_cholesky(k: &DMatrix<f64>, base_jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = base_jitter;
    for _ in 0..4 {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            if c.l().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok((c, jitter));
            }
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "kernel matrix not positive definite with jitter up to {:e}",
        jitter / 10.0
    )))
}

/// Per-feature median absolute difference, scaled by √dim so that typical
/// scaled distances are of order one. Falls back to a scalar for features
/// whose median difference is zero.
pub fn median_heuristic(x: &DMatrix<f64>) -> Vec<f64> {
    const MAX_POINTS: usize = 300;
    let n = x.nrows().min(MAX_POINTS);
    let dim = x.ncols();
    // deterministic stride subsample
    let stride = (x.nrows() / n.max(1)).max(1);
    let idx: Vec<usize> = (0..n).map(|i| i * stride).collect();
    let mut per_feature = Vec::with_capacity(dim);
    let mut all = Vec::new();
    for j in 0..dim {
        let mut diffs = Vec::with_capacity(n * (n - 1) / 2);
        for a in 0..idx.len() {
            for b in 0..a {
                diffs.push((x[(idx[a], j)] - x[(idx[b], j)]).abs());
            }
        }
        let med = median(&mut diffs);
        all.push(med);
        per_feature.push(med);
    }
    let positive: Vec<f64> = all.into_iter().filter(|m| *m > 0.0).collect();
    let fallback = if positive.is_empty() {
        1.0
    } else {
        let mut p = positive;
        median(&mut p)
    };
    let scale = (dim as f64).sqrt();
    per_feature
        .into_iter()
        .map(|m| if m > 0.0 { m * scale } else { fallback * scale })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
