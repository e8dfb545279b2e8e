//! Gaussian process preference learning.
//!
//! Each document has a latent utility `f(x)` with a zero-mean Matérn 3/2 GP
//! prior over its feature vector. A label `a ≻ b` is observed with probability
//! `Φ((f(a) − f(b)) / (√2·σ²))`. The posterior is approximated with `M`
//! inducing utilities `u = f(Z)` and a Gaussian `q(u) = N(m, S)` fitted by
//! natural-gradient stochastic variational inference on
//!
//! ```text
//! L(m, S) = Σ_pairs count · E_q[ln Φ((f_a − f_b)/s)] − KL(q(u) ‖ p(u))
//! ```
//!
//! Expectations over the pairwise utility difference are taken with
//! Gauss–Hermite quadrature. A dense Laplace approximation over all documents
//! ([`fit_exact_reference`]) serves as the reference for small problems.

mod inducing;
mod kernel;
mod laplace;
mod likelihood;

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bws::{Provenance, ScoreVector};
use crate::corpus::{pair_ids, FeatureMatrix, PairLabel};
use crate::error::{Error, Result};

pub use inducing::kmeans_pp;
pub use kernel::{jittered_cholesky, matern32, median_heuristic, Matern32};
pub use laplace::{fit_exact_reference, EXACT_REFERENCE_MAX_DOCS};
pub use likelihood::{log_normal_cdf, normal_cdf, pair_probability, probit_scale};

use likelihood::expected_log_lik;

/// Relative jitter added to the inducing covariance diagonal before escalation.
pub const BASE_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpplConfig {
    /// Likelihood variance σ².
    pub sigma2: f64,
    /// Kernel output scale.
    pub signal_var: f64,
    /// One value per feature, a single isotropic value, or `None` for the
    /// median heuristic.
    pub lengthscales: Option<Vec<f64>>,
    pub n_inducing: usize,
    pub batch_size: usize,
    pub max_iters: usize,
    /// Relative change of the bound below which fitting stops.
    pub tol: f64,
    /// Natural-gradient step size.
    pub step_size: f64,
    /// Pattern search on lengthscales and signal variance every
    /// `hyper_every` iterations.
    pub optimize_hyperparameters: bool,
    pub hyper_every: usize,
    pub seed: u64,
}

impl Default for GpplConfig {
    fn default() -> Self {
        GpplConfig {
            sigma2: 1.0,
            signal_var: 1.0,
            lengthscales: None,
            n_inducing: 500,
            batch_size: 200,
            max_iters: 1000,
            tol: 1e-6,
            step_size: 0.1,
            optimize_hyperparameters: false,
            hyper_every: 25,
            seed: 0,
        }
    }
}

impl GpplConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma2", self.sigma2),
            ("signal_var", self.signal_var),
            ("tol", self.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "gppl.{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::Config(format!(
                "gppl.step_size must be in (0, 1], got {}",
                self.step_size
            )));
        }
        for (name, v) in [
            ("n_inducing", self.n_inducing),
            ("batch_size", self.batch_size),
            ("max_iters", self.max_iters),
            ("hyper_every", self.hyper_every),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("gppl.{name} must be positive")));
            }
        }
        Ok(())
    }

    fn resolve_kernel(&self, x: &DMatrix<f64>) -> Result<Matern32> {
        let dim = x.ncols();
        let ls = match &self.lengthscales {
            None => median_heuristic(x),
            Some(v) if v.len() == 1 => vec![v[0]; dim],
            Some(v) if v.len() == dim => v.clone(),
            Some(v) => {
                return Err(Error::Config(format!(
                    "{} lengthscales for {dim} features",
                    v.len()
                )))
            }
        };
        Matern32::new(self.signal_var, ls)
    }
}

/// Fitted variational posterior over the inducing utilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpplPosterior {
    pub inducing_inputs: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub kernel: Matern32,
    pub sigma2: f64,
    /// Diagonal jitter that made the inducing covariance factorizable.
    pub jitter: f64,
    /// Full-data bound after each evaluation.
    pub bound_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl GpplPosterior {
    pub fn input_dim(&self) -> usize {
        self.inducing_inputs.ncols()
    }

    pub fn n_inducing(&self) -> usize {
        self.inducing_inputs.nrows()
    }
}

/// Predictive utility mean and variance per document.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityPrediction {
    pub ids: Vec<String>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl UtilityPrediction {
    pub fn get(&self, id: &str) -> Option<(f64, f64)> {
        let i = self.ids.iter().position(|x| x == id)?;
        Some((self.mean[i], self.variance[i]))
    }

    pub fn to_scores(&self) -> ScoreVector {
        ScoreVector::new(self.ids.clone(), self.mean.clone(), Provenance::Gppl)
            .expect("prediction ids are unique")
    }
}

/// Documents referenced by `pairs`, their features, and pairs as row indices.
pub(crate) struct TrainingData {
    pub ids: Vec<String>,
    pub x: DMatrix<f64>,
    pub pairs: Vec<(usize, usize, f64)>,
}

impl TrainingData {
    pub fn new(features: &FeatureMatrix, pairs: &[PairLabel]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Invalid(
                "GPPL needs at least one pairwise label".into(),
            ));
        }
        let ids = pair_ids(pairs);
        let rows = features.indices_of(&ids)?;
        let x = DMatrix::from_fn(rows.len(), features.dim(), |i, j| features.row(rows[i])[j]);
        let pos: std::collections::HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let pairs = pairs
            .iter()
            .map(|p| {
                (
                    pos[p.winner.as_str()],
                    pos[p.loser.as_str()],
                    p.count as f64,
                )
            })
            .collect();
        Ok(TrainingData { ids, x, pairs })
    }
}

fn same_row(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> bool {
    (0..a.ncols()).all(|c| a[(i, c)] == b[(j, c)])
}

/// Kernel cross-covariance where the jitter acts as a nugget: inputs that
/// coincide exactly share the jittered diagonal.
fn cross_with_nugget(
    kernel: &Matern32,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    jitter: f64,
) -> DMatrix<f64> {
    let mut k = kernel.cross(a, b);
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            if same_row(a, i, b, j) {
                k[(i, j)] += jitter;
            }
        }
    }
    k
}

/// Everything that depends on the kernel and inducing inputs but not on q(u).
pub(crate) struct SparseProblem {
    kernel: Matern32,
    jitter: f64,
    z: DMatrix<f64>,
    kmm_chol: Cholesky<f64, Dyn>,
    kmm_inv: DMatrix<f64>,
    /// Rows are Kmm⁻¹ k(Z, x_i) for each training document.
    proj: DMatrix<f64>,
    pairs: Vec<(usize, usize, f64)>,
    cond_var: Vec<f64>,
    scale: f64,
}

impl SparseProblem {
    fn new(kernel: Matern32, z: DMatrix<f64>, data: &TrainingData, sigma2: f64) -> Result<Self> {
        let kmm = kernel.gram(&z);
        let (kmm_chol, jitter) = jittered_cholesky(&kmm, BASE_JITTER * kernel.signal_var)?;
        let kmm_inv = kmm_chol.inverse();
        let knm = cross_with_nugget(&kernel, &data.x, &z, jitter);
        let proj = kmm_chol.solve(&knm.transpose()).transpose();
        let kxx = kernel.signal_var + jitter;
        let cond_var = data
            .pairs
            .iter()
            .map(|&(a, b, _)| {
                let ra: Vec<f64> = data.x.row(a).iter().copied().collect();
                let rb: Vec<f64> = data.x.row(b).iter().copied().collect();
                let mut kab = kernel.eval(&ra, &rb)?;
                if same_row(&data.x, a, &data.x, b) {
                    kab += jitter;
                }
                let diff_k = knm.row(a) - knm.row(b);
                let diff_p = proj.row(a) - proj.row(b);
                Ok((2.0 * kxx - 2.0 * kab - diff_k.dot(&diff_p)).max(0.0))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(SparseProblem {
            kernel,
            jitter,
            z,
            kmm_chol,
            kmm_inv,
            proj,
            pairs: data.pairs.clone(),
            cond_var,
            scale: probit_scale(sigma2),
        })
    }

    fn n_inducing(&self) -> usize {
        self.z.nrows()
    }

    fn direction(&self, p: usize) -> DVector<f64> {
        let (a, b, _) = self.pairs[p];
        (self.proj.row(a) - self.proj.row(b)).transpose()
    }

    fn pair_moments(
        &self,
        p: usize,
        m: &DVector<f64>,
        s: &DMatrix<f64>,
    ) -> (DVector<f64>, f64, f64) {
        let d = self.direction(p);
        let mean = d.dot(m);
        let var = (s * &d).dot(&d) + self.cond_var[p];
        (d, mean, var)
    }

    fn kl(&self, m: &DVector<f64>, s: &DMatrix<f64>, ln_det_s: f64) -> f64 {
        let mdim = self.n_inducing() as f64;
        let trace = (&self.kmm_inv * s).trace();
        let quad = (&self.kmm_inv * m).dot(m);
        0.5 * (trace + quad - mdim + self.kmm_chol.ln_determinant() - ln_det_s)
    }

    fn expected_log_lik(&self, m: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
        (0..self.pairs.len())
            .map(|p| {
                let (_, mean, var) = self.pair_moments(p, m, s);
                self.pairs[p].2 * expected_log_lik(mean, var, self.scale).value
            })
            .sum()
    }

    fn bound(&self, m: &DVector<f64>, s: &DMatrix<f64>, ln_det_s: f64) -> f64 {
        self.expected_log_lik(m, s) - self.kl(m, s, ln_det_s)
    }

    fn grad_mean(&self, m: &DVector<f64>, s: &DMatrix<f64>) -> DVector<f64> {
        let mut g = -(&self.kmm_inv * m);
        for p in 0..self.pairs.len() {
            let (d, mean, var) = self.pair_moments(p, m, s);
            let e = expected_log_lik(mean, var, self.scale);
            g.axpy(self.pairs[p].2 * e.d_mean, &d, 1.0);
        }
        g
    }

    /// Gradients of the (rescaled) expected log likelihood over `batch` with
    /// respect to m and S.
    fn batch_gradients(
        &self,
        batch: &[usize],
        weight: f64,
        m: &DVector<f64>,
        s: &DMatrix<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.n_inducing();
        let mut dirs = DMatrix::zeros(batch.len(), k);
        let mut alpha = DVector::zeros(batch.len());
        let mut beta = DVector::zeros(batch.len());
        for (r, &p) in batch.iter().enumerate() {
            let (d, mean, var) = self.pair_moments(p, m, s);
            let e = expected_log_lik(mean, var, self.scale);
            let c = weight * self.pairs[p].2;
            alpha[r] = c * e.d_mean;
            beta[r] = 0.5 * c * e.d2;
            dirs.row_mut(r).copy_from(&d.transpose());
        }
        let g_m = dirs.tr_mul(&alpha);
        let mut scaled = dirs.clone();
        for (r, b) in beta.iter().enumerate() {
            scaled.row_mut(r).scale_mut(*b);
        }
        let g_s = dirs.tr_mul(&scaled);
        (g_m, g_s)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    m.scale_mut(0.5);
}

/// Natural-parameter state of q(u): precision Λ = S⁻¹ and θ = Λm.
struct NaturalState {
    precision: DMatrix<f64>,
    theta: DVector<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    ln_det_cov: f64,
}

impl NaturalState {
    fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Numerical("variational covariance lost definiteness".into()))?;
        let precision = chol.inverse();
        let theta = &precision * &mean;
        Ok(NaturalState {
            ln_det_cov: chol.ln_determinant(),
            precision,
            theta,
            mean,
            cov,
        })
    }

    fn update(&mut self, precision: DMatrix<f64>, theta: DVector<f64>) -> Result<()> {
        let mut precision = precision;
        symmetrize(&mut precision);
        let chol = Cholesky::new(precision.clone()).ok_or_else(|| {
            Error::Numerical("variational precision is not positive definite".into())
        })?;
        self.mean = chol.solve(&theta);
        self.cov = chol.inverse();
        symmetrize(&mut self.cov);
        self.ln_det_cov = -chol.ln_determinant();
        self.precision = precision;
        self.theta = theta;
        Ok(())
    }
}

fn build_problem(
    features: &FeatureMatrix,
    pairs: &[PairLabel],
    cfg: &GpplConfig,
) -> Result<(TrainingData, SparseProblem)> {
    cfg.validate()?;
    let data = TrainingData::new(features, pairs)?;
    let kernel = cfg.resolve_kernel(&data.x)?;
    let z = kmeans_pp(&data.x, cfg.n_inducing.min(data.x.nrows()), cfg.seed);
    let problem = SparseProblem::new(kernel, z, &data, cfg.sigma2)?;
    Ok((data, problem))
}

/// Fits the sparse variational posterior to `pairs`.
///
/// Training documents are those referenced by `pairs`; each must have a row in
/// `features`. Inducing inputs are k-means++ centres of their features.
pub fn fit(
    features: &FeatureMatrix,
    pairs: &[PairLabel],
    cfg: &GpplConfig,
) -> Result<GpplPosterior> {
    let (data, mut problem) = build_problem(features, pairs, cfg)?;
    let n_pairs = problem.pairs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_9a11);
    let full_batch = n_pairs <= cfg.batch_size;
    let eval_every = n_pairs.div_ceil(cfg.batch_size);
    let all: Vec<usize> = (0..n_pairs).collect();

    let kmm = problem.kmm_chol.l() * problem.kmm_chol.l().transpose();
    let mut state = NaturalState::from_moments(DVector::zeros(problem.n_inducing()), kmm)?;
    let mut trace = vec![problem.bound(&state.mean, &state.cov, state.ln_det_cov)];
    let rho = cfg.step_size;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let batch: Vec<usize> = if full_batch {
            all.clone()
        } else {
            sample(&mut rng, n_pairs, cfg.batch_size).into_vec()
        };
        let weight = n_pairs as f64 / batch.len() as f64;
        let (g_m, g_s) = problem.batch_gradients(&batch, weight, &state.mean, &state.cov);
        let target_precision = &problem.kmm_inv - 2.0 * &g_s;
        let target_theta = &g_m - 2.0 * (&g_s * &state.mean);
        let precision = (1.0 - rho) * &state.precision + rho * target_precision;
        let theta = (1.0 - rho) * &state.theta + rho * target_theta;
        state.update(precision, theta)?;

        if cfg.optimize_hyperparameters && iter % cfg.hyper_every == 0 {
            if let Some(better) = improve_hyperparameters(&problem, &data, cfg, &state)? {
                problem = better;
                state = NaturalState::from_moments(state.mean.clone(), state.cov.clone())?;
            }
        }

        if iter % eval_every == 0 {
            let bound = problem.bound(&state.mean, &state.cov, state.ln_det_cov);
            if !bound.is_finite() {
                return Err(Error::Numerical(format!(
                    "bound became {bound} at iteration {iter}"
                )));
            }
            let prev = *trace.last().unwrap();
            trace.push(bound);
            if ((bound - prev) / prev.abs().max(1e-12)).abs() < cfg.tol {
                converged = true;
                break;
            }
        }
    }
    debug!(
        "gppl fit: {} docs, {} pairs, {} inducing, {iterations} iterations, bound {:.4}",
        data.ids.len(),
        n_pairs,
        problem.n_inducing(),
        trace.last().unwrap()
    );
    Ok(GpplPosterior {
        inducing_inputs: problem.z,
        mean: state.mean,
        cov: state.cov,
        kernel: problem.kernel,
        sigma2: cfg.sigma2,
        jitter: problem.jitter,
        bound_trace: trace,
        iterations,
        converged,
    })
}

/// One round of multiplicative pattern search over the kernel
/// hyperparameters, holding q(u) fixed. Returns the rebuilt problem if any
/// candidate raised the bound.
fn improve_hyperparameters(
    problem: &SparseProblem,
    data: &TrainingData,
    cfg: &GpplConfig,
    state: &NaturalState,
) -> Result<Option<SparseProblem>> {
    const FACTORS: [f64; 2] = [0.8, 1.25];
    let mut best_bound = problem.bound(&state.mean, &state.cov, state.ln_det_cov);
    let mut best: Option<SparseProblem> = None;
    let base = problem.kernel.clone();
    let mut candidates = Vec::new();
    for f in FACTORS {
        candidates.push(Matern32::new(
            base.signal_var,
            base.lengthscales.iter().map(|l| l * f).collect(),
        )?);
        candidates.push(Matern32::new(
            base.signal_var * f,
            base.lengthscales.clone(),
        )?);
    }
    for kernel in candidates {
        let Ok(cand) = SparseProblem::new(kernel, problem.z.clone(), data, cfg.sigma2) else {
            continue;
        };
        let b = cand.bound(&state.mean, &state.cov, state.ln_det_cov);
        if b.is_finite() && b > best_bound {
            best_bound = b;
            best = Some(cand);
        }
    }
    Ok(best)
}

/// Sparse-GP predictive mean and variance at every row of `features`.
pub fn predict(post: &GpplPosterior, features: &FeatureMatrix) -> Result<UtilityPrediction> {
    if features.dim() != post.input_dim() {
        return Err(Error::Dimension {
            expected: post.input_dim(),
            got: features.dim(),
            context: "GPPL prediction features".into(),
        });
    }
    let mut kmm = post.kernel.gram(&post.inducing_inputs);
    for i in 0..kmm.nrows() {
        kmm[(i, i)] += post.jitter;
    }
    let chol = Cholesky::new(kmm)
        .ok_or_else(|| Error::Numerical("stored inducing covariance is not factorizable".into()))?;
    let x = features.to_matrix();
    let ksm = cross_with_nugget(&post.kernel, &x, &post.inducing_inputs, post.jitter);
    let a = chol.solve(&ksm.transpose()); // M × n
    let prior_var = post.kernel.signal_var + post.jitter;
    let mean = a.tr_mul(&post.mean);
    let sa = &post.cov * &a;
    let variance = (0..x.nrows())
        .map(|i| {
            let ai = a.column(i);
            let explained = ksm.row(i).transpose().dot(&ai);
            (prior_var - explained + ai.dot(&sa.column(i))).max(0.0)
        })
        .collect();
    Ok(UtilityPrediction {
        ids: features.doc_ids().to_vec(),
        mean: mean.iter().copied().collect(),
        variance,
    })
}

/// The variational bound as an explicit function of (m, S), for diagnostics
/// and gradient checks. Built exactly as [`fit`] builds its objective.
pub struct VariationalObjective {
    problem: SparseProblem,
}

impl VariationalObjective {
    pub fn new(features: &FeatureMatrix, pairs: &[PairLabel], cfg: &GpplConfig) -> Result<Self> {
        let (_, problem) = build_problem(features, pairs, cfg)?;
        Ok(VariationalObjective { problem })
    }

    pub fn n_inducing(&self) -> usize {
        self.problem.n_inducing()
    }

    /// Jittered prior covariance of the inducing utilities.
    pub fn prior_cov(&self) -> DMatrix<f64> {
        self.problem.kmm_chol.l() * self.problem.kmm_chol.l().transpose()
    }

    pub fn bound(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        Ok(self.problem.bound(mean, cov, chol.ln_determinant()))
    }

    /// Analytic gradient of the bound with respect to the variational mean.
    pub fn bound_grad_mean(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> DVector<f64> {
        self.problem.grad_mean(mean, cov)
    }

    /// Analytic gradient of the bound with respect to the variational
    /// covariance, treating its entries as independent.
    pub fn bound_grad_cov(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let cov_inv = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?
            .inverse();
        let all: Vec<usize> = (0..self.problem.pairs.len()).collect();
        let (_, g_s) = self.problem.batch_gradients(&all, 1.0, mean, cov);
        Ok(g_s - 0.5 * (&self.problem.kmm_inv - cov_inv))
    }
}
