//! Synthetic corpora with known utilities and probit-noise annotators.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bws::{save_scores, Provenance, ScoreVector};
use crate::corpus::{merge_pairs, save_features_text, save_pairs, FeatureMatrix, PairLabel};
use crate::error::{Error, Result};
use crate::gppl::{jittered_cholesky, pair_probability, Matern32};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityFn {
    /// `u(x) = √3 · w·x` for a random unit vector `w` (unit variance on the cube).
    Linear,
    /// A draw from a zero-mean Matérn 3/2 GP with unit hyperparameters.
    GpSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub dim: usize,
    pub utility_fn: UtilityFn,
    /// Number of pair draws (with replacement over unordered document pairs).
    pub pairs_total: usize,
    pub annotators_per_pair: usize,
    pub sigma2: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_docs: 100,
            dim: 2,
            utility_fn: UtilityFn::Linear,
            pairs_total: 500,
            annotators_per_pair: 1,
            sigma2: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_docs < 2
            || self.dim == 0
            || self.pairs_total == 0
            || self.annotators_per_pair == 0
        {
            return Err(Error::Config(
                "synth needs n_docs ≥ 2 and positive dim, pairs_total, annotators_per_pair".into(),
            ));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!(
                "synth.sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub features: FeatureMatrix,
    pub truth: ScoreVector,
    pub pairs: Vec<PairLabel>,
}

impl SynthCorpus {
    /// Writes `features.tsv`, `pairs.tsv` and `truth.tsv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        save_features_text(&self.features, dir.join("features.tsv"))?;
        save_pairs(&self.pairs, dir.join("pairs.tsv"))?;
        save_scores(&self.truth, dir.join("truth.tsv"))
    }
}

pub fn doc_id(i: usize) -> String {
    format!("doc{i:05}")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ids: Vec<String> = (0..cfg.n_docs).map(doc_id).collect();
    let rows: Vec<Vec<f64>> = (0..cfg.n_docs)
        .map(|_| (0..cfg.dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let features = FeatureMatrix::new(ids.clone(), rows)?;

    let utilities = match cfg.utility_fn {
        UtilityFn::Linear => {
            let mut w: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            w.iter_mut().for_each(|v| *v *= 3f64.sqrt() / norm);
            (0..cfg.n_docs)
                .map(|i| features.row(i).iter().zip(&w).map(|(x, c)| x * c).sum())
                .collect::<Vec<f64>>()
        }
        UtilityFn::GpSample => {
            let kernel = Matern32::isotropic(1.0, 1.0, cfg.dim)?;
            let (chol, _) = jittered_cholesky(&kernel.gram(&features.to_matrix()), 1e-8)?;
            let eps = nalgebra::DVector::from_fn(cfg.n_docs, |_, _| rng.sample(StandardNormal));
            (chol.l() * eps).iter().copied().collect()
        }
    };

    let mut votes = Vec::with_capacity(cfg.pairs_total * cfg.annotators_per_pair);
    for _ in 0..cfg.pairs_total {
        let a = rng.random_range(0..cfg.n_docs);
        let mut b = rng.random_range(0..cfg.n_docs - 1);
        if b >= a {
            b += 1;
        }
        let p = pair_probability(utilities[a], utilities[b], cfg.sigma2);
        for _ in 0..cfg.annotators_per_pair {
            let (w, l) = if rng.random::<f64>() < p {
                (a, b)
            } else {
                (b, a)
            };
            votes.push(PairLabel::new(ids[w].clone(), ids[l].clone(), 1));
        }
    }

    Ok(SynthCorpus {
        features,
        truth: ScoreVector::new(ids, utilities, Provenance::Truth)?,
        pairs: merge_pairs(votes),
    })
}
