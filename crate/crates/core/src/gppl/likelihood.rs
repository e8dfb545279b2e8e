//! Probit pairwise likelihood and its Gaussian expectations.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use libm::erfc;
use nalgebra::DMatrix;

const HERMITE_NODES: usize = 32;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// ln Φ(z), accurate in the far lower tail.
pub fn log_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        normal_cdf(z).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - LN_SQRT_2PI - (-z).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// φ(z)/Φ(z), the derivative of ln Φ.
pub fn inverse_mills(z: f64) -> f64 {
    if z > -30.0 {
        normal_pdf(z) / normal_cdf(z)
    } else {
        let z2 = z * z;
        -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2))
    }
}

/// Scale of the probit argument for likelihood variance `sigma2`: √2·σ².
pub fn probit_scale(sigma2: f64) -> f64 {
    SQRT_2 * sigma2
}

/// Probability that an item with utility `u1` is preferred over one with `u2`.
pub fn pair_probability(u1: f64, u2: f64, sigma2: f64) -> f64 {
    normal_cdf((u1 - u2) / probit_scale(sigma2))
}

/// Derivatives of ln Φ(g/s) with respect to g.
#[inline]
pub(crate) fn log_lik_derivs(g: f64, scale: f64) -> (f64, f64, f64) {
    let z = g / scale;
    let lam = inverse_mills(z);
    (
        log_normal_cdf(z),
        lam / scale,
        -lam * (lam + z) / (scale * scale),
    )
}

/// Gauss–Hermite rule for ∫ e^{-x²} f(x) dx, computed once by Golub–Welsch.
fn hermite_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = HERMITE_NODES;
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = jacobi.symmetric_eigen();
        let mut rule: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], PI.sqrt() * v0 * v0)
            })
            .collect();
        rule.sort_by(|a, b| a.0.total_cmp(&b.0));
        rule.into_iter().unzip()
    })
}

/// E[ln Φ(g/s)] for g ~ N(mean, var), with the derivative with respect to the
/// mean and the expected second derivative E[∂² ln Φ(g/s)/∂g²].
#[derive(Debug, Clone, Copy)]
pub(crate) struct ExpectedLogLik {
    pub value: f64,
    pub d_mean: f64,
    pub d2: f64,
}

pub(crate) fn expected_log_lik(mean: f64, var: f64, scale: f64) -> ExpectedLogLik {
    let (nodes, weights) = hermite_rule();
    let spread = (2.0 * var.max(0.0)).sqrt();
    let norm = 1.0 / PI.sqrt();
    let mut out = ExpectedLogLik {
        value: 0.0,
        d_mean: 0.0,
        d2: 0.0,
    };
    for (x, w) in nodes.iter().zip(weights) {
        let (f, d1, d2) = log_lik_derivs(mean + spread * x, scale);
        out.value += w * f;
        out.d_mean += w * d1;
        out.d2 += w * d2;
    }
    out.value *= norm;
    out.d_mean *= norm;
    out.d2 *= norm;
    out
}
