//! Dense Laplace approximation over every document: the O(n³) reference.

use nalgebra::{DMatrix, DVector};

use super::kernel::jittered_cholesky;
use super::likelihood::{log_lik_derivs, probit_scale};
use super::{GpplConfig, TrainingData, UtilityPrediction, BASE_JITTER};
use crate::corpus::{FeatureMatrix, PairLabel};
use crate::error::{Error, Result};

pub const EXACT_REFERENCE_MAX_DOCS: usize = 200;

const MAX_NEWTON_STEPS: usize = 200;

/// Posterior utilities for every row of `features` under a full GP prior,
/// approximated at the mode by Newton's method.
///
/// Kernel hyperparameters are resolved on the documents referenced by
/// `pairs`, exactly as [`super::fit`] does.
pub fn fit_exact_reference(
    features: &FeatureMatrix,
    pairs: &[PairLabel],
    cfg: &GpplConfig,
) -> Result<UtilityPrediction> {
    cfg.validate()?;
    if features.len() > EXACT_REFERENCE_MAX_DOCS {
        return Err(Error::Invalid(format!(
            "exact reference is limited to {EXACT_REFERENCE_MAX_DOCS} documents, got {}",
            features.len()
        )));
    }
    let data = TrainingData::new(features, pairs)?;
    let kernel = cfg.resolve_kernel(&data.x)?;
    let x = features.to_matrix();
    let n = x.nrows();
    let (chol, _) = jittered_cholesky(&kernel.gram(&x), BASE_JITTER * kernel.signal_var)?;
    let k = chol.l() * chol.l().transpose();

    let rows = features.indices_of(&data.ids)?;
    let edges: Vec<(usize, usize, f64)> = data
        .pairs
        .iter()
        .map(|&(a, b, c)| (rows[a], rows[b], c))
        .collect();
    let scale = probit_scale(cfg.sigma2);

    // Ψ(α) = Σ c ln Φ((f_a − f_b)/s) − ½ αᵀKα with f = Kα
    let objective = |f: &DVector<f64>, alpha: &DVector<f64>| -> f64 {
        let ll: f64 = edges
            .iter()
            .map(|&(a, b, c)| c * log_lik_derivs(f[a] - f[b], scale).0)
            .sum();
        ll - 0.5 * f.dot(alpha)
    };
    let derivs = |f: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mut grad = DVector::zeros(n);
        let mut w = DMatrix::zeros(n, n);
        for &(a, b, c) in &edges {
            let (_, d1, d2) = log_lik_derivs(f[a] - f[b], scale);
            grad[a] += c * d1;
            grad[b] -= c * d1;
            let h = -c * d2;
            w[(a, a)] += h;
            w[(b, b)] += h;
            w[(a, b)] -= h;
            w[(b, a)] -= h;
        }
        (grad, w)
    };

    let eye = DMatrix::<f64>::identity(n, n);
    let mut alpha = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    let mut psi = objective(&f, &alpha);
    for _ in 0..MAX_NEWTON_STEPS {
        let (grad, w) = derivs(&f);
        let b = &eye + &w * &k;
        let rhs = &w * &f + grad;
        let target = b
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular Newton system".into()))?;
        let step = target - &alpha;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let cand_alpha = &alpha + t * &step;
            let cand_f = &k * &cand_alpha;
            let cand_psi = objective(&cand_f, &cand_alpha);
            if cand_psi >= psi {
                let delta = (&cand_f - &f).amax();
                alpha = cand_alpha;
                f = cand_f;
                let gain = cand_psi - psi;
                psi = cand_psi;
                accepted = true;
                if delta < 1e-12 || gain < 1e-14 * psi.abs().max(1.0) {
                    return finish(features, &k, &f, &derivs(&f).1);
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let w = derivs(&f).1;
    finish(features, &k, &f, &w)
}

fn finish(
    features: &FeatureMatrix,
    k: &DMatrix<f64>,
    f: &DVector<f64>,
    w: &DMatrix<f64>,
) -> Result<UtilityPrediction> {
    let n = k.nrows();
    // Σ = (K⁻¹ + W)⁻¹ = K (I + W K)⁻¹
    let b = DMatrix::<f64>::identity(n, n) + w * k;
    let b_inv = b
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular posterior covariance system".into()))?;
    let sigma = k * b_inv;
    Ok(UtilityPrediction {
        ids: features.doc_ids().to_vec(),
        mean: f.iter().copied().collect(),
        variance: (0..n).map(|i| sigma[(i, i)].max(0.0)).collect(),
    })
}
