//! Stacked generalization over GPPL and DirectRanker level-0 models.
//!
//! Training ids are split into `n` folds. In each fold the level-0 models are
//! trained on pairs among the training part, score the held-out part, and a
//! linear meta-model maps their standardized scores to the held-out BWS
//! scores. A stacked prediction averages the fold meta-models' outputs.

use std::collections::BTreeSet;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bws::{compute_bws, Provenance, ScoreVector};
use crate::corpus::{FeatureMatrix, PairLabel};
use crate::directranker::{self, RankerConfig, RankerModel};
use crate::error::{Error, Result};
use crate::eval::average_ranks;
use crate::gppl::{self, GpplConfig, GpplPosterior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Level0Kind {
    #[serde(rename = "gppl")]
    Gppl(GpplConfig),
    #[serde(rename = "directranker")]
    DirectRanker(RankerConfig),
}

impl Level0Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Level0Kind::Gppl(_) => "gppl",
            Level0Kind::DirectRanker(_) => "directranker",
        }
    }
}

/// A trained level-0 model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Level0Model {
    Gppl(GpplPosterior),
    DirectRanker(RankerModel),
}

impl Level0Model {
    /// GPPL posterior mean utilities or DirectRanker scores.
    pub fn predict(&self, features: &FeatureMatrix) -> Result<ScoreVector> {
        match self {
            Level0Model::Gppl(p) => Ok(gppl::predict(p, features)?.to_scores()),
            Level0Model::DirectRanker(m) => m.predict_scores(features),
        }
    }
}

/// Trains one level-0 model on `pairs` among `train_ids`. DirectRanker
/// targets are the BWS scores of those pairs; `val` enables its early
/// stopping.
pub fn train_level0(
    kind: &Level0Kind,
    features: &FeatureMatrix,
    train_ids: &[String],
    pairs: &[PairLabel],
    val: Option<directranker::Validation<'_>>,
) -> Result<Level0Model> {
    match kind {
        Level0Kind::Gppl(cfg) => Ok(Level0Model::Gppl(gppl::fit(features, pairs, cfg)?)),
        Level0Kind::DirectRanker(cfg) => {
            let bws = compute_bws(train_ids, pairs)?;
            Ok(Level0Model::DirectRanker(directranker::train(
                features, &bws, cfg, val,
            )?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level0Spec {
    /// Label used in reports, e.g. `gppl_se`.
    pub name: String,
    pub model: Level0Kind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StackConfig {
    pub n_folds: usize,
    pub level0: Vec<Level0Spec>,
    /// Average per-fold rank positions instead of per-fold scores.
    pub rank_mean: bool,
    /// Early-stop DirectRanker level-0 models on the fold's held-out part.
    pub early_stopping: bool,
    pub seed: u64,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            n_folds: 4,
            level0: Vec::new(),
            rank_mean: false,
            early_stopping: true,
            seed: 0,
        }
    }
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(Error::Config("stacking.n_folds must be at least 2".into()));
        }
        if self.level0.is_empty() {
            return Err(Error::Config(
                "stacking needs at least one level-0 model".into(),
            ));
        }
        for spec in &self.level0 {
            match &spec.model {
                Level0Kind::Gppl(c) => c.validate()?,
                Level0Kind::DirectRanker(c) => c.validate()?,
            }
        }
        Ok(())
    }
}

/// Linear map from standardized level-0 scores to a target score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Set when the least-squares fit was degenerate and uniform weights were used.
    pub fallback: bool,
}

impl MetaModel {
    pub fn apply(&self, inputs: &[f64]) -> f64 {
        self.intercept
            + inputs
                .iter()
                .zip(&self.means)
                .zip(&self.scales)
                .zip(&self.weights)
                .map(|(((x, m), s), w)| w * (x - m) / s)
                .sum::<f64>()
    }

    /// Weights and intercept on the unstandardized level-0 scores.
    pub fn raw_weights(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.scales)
            .map(|(w, s)| w / s)
            .collect();
        let b = self.intercept - w.iter().zip(&self.means).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }
}

/// Least-squares fit of `target` on standardized columns of `inputs`
/// (one row per document). Constant columns or a rank-deficient design fall
/// back to uniform weights.
pub fn fit_meta(inputs: &DMatrix<f64>, target: &[f64]) -> Result<MetaModel> {
    let (n, l) = inputs.shape();
    if n != target.len() || n == 0 || l == 0 {
        return Err(Error::Invalid(format!(
            "meta-model needs matching non-empty inputs ({n}×{l}) and targets ({})",
            target.len()
        )));
    }
    let mut means = Vec::with_capacity(l);
    let mut scales = Vec::with_capacity(l);
    let mut degenerate = false;
    for j in 0..l {
        let col = inputs.column(j);
        let m = col.mean();
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        means.push(m);
        if sd > 1e-12 * m.abs().max(1.0) {
            scales.push(sd);
        } else {
            scales.push(1.0);
            degenerate = true;
        }
    }
    let y_mean = target.iter().sum::<f64>() / n as f64;
    let design = DMatrix::from_fn(n, l + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            (inputs[(i, j - 1)] - means[j - 1]) / scales[j - 1]
        }
    });
    let solution = if degenerate || n < l + 1 {
        None
    } else {
        let svd = design.svd(true, true);
        let smax = svd.singular_values.max();
        if svd.rank(1e-10 * smax) < l + 1 {
            None
        } else {
            svd.solve(&DVector::from_column_slice(target), 0.0).ok()
        }
    };
    Ok(match solution {
        Some(beta) => MetaModel {
            means,
            scales,
            weights: beta.iter().skip(1).copied().collect(),
            intercept: beta[0],
            fallback: false,
        },
        None => {
            warn!("degenerate meta-model design ({n} rows, {l} inputs); using uniform weights");
            MetaModel {
                means,
                scales,
                weights: vec![1.0 / l as f64; l],
                intercept: y_mean,
                fallback: true,
            }
        }
    })
}

/// Splits `ids` into `n` folds of near-equal size after a seeded shuffle of
/// the sorted ids. Returns `(train_ids, val_ids)` per fold.
pub fn make_folds<S: AsRef<str>>(
    ids: &[S],
    n: usize,
    seed: u64,
) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let mut order: Vec<String> = ids
        .iter()
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if n == 0 || order.len() < n {
        return Err(Error::Invalid(format!(
            "cannot split {} ids into {n} folds",
            order.len()
        )));
    }
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = order.len() / n;
    let extra = order.len() % n;
    let mut folds = Vec::with_capacity(n);
    let mut start = 0;
    for f in 0..n {
        let len = base + usize::from(f < extra);
        let val: Vec<String> = order[start..start + len].to_vec();
        let train: Vec<String> = order[..start]
            .iter()
            .chain(&order[start + len..])
            .cloned()
            .collect();
        folds.push((train, val));
        start += len;
    }
    Ok(folds)
}

/// Pairs whose two documents both lie in `train_ids`.
pub fn fold_pairs<S: AsRef<str>>(pairs: &[PairLabel], train_ids: &[S]) -> Vec<PairLabel> {
    let keep: BTreeSet<&str> = train_ids.iter().map(AsRef::as_ref).collect();
    pairs
        .iter()
        .filter(|p| keep.contains(p.winner.as_str()) && keep.contains(p.loser.as_str()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldModel {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub level0: Vec<Level0Model>,
    pub meta: MetaModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackModel {
    pub config: StackConfig,
    pub folds: Vec<FoldModel>,
}

fn level0_matrix(
    models: &[Level0Model],
    features: &[&FeatureMatrix],
    ids: &[String],
) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(ids.len(), models.len());
    for (j, (model, fm)) in models.iter().zip(features).enumerate() {
        let scores = model.predict(&fm.subset(ids)?)?;
        for (i, v) in scores.scores().iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// Trains the stack. `features[k]` feeds `cfg.level0[k]`; `bws_train` holds
/// the meta-model targets for every training id and defines the id set.
pub fn fit_stack(
    features: &[&FeatureMatrix],
    pairs: &[PairLabel],
    bws_train: &ScoreVector,
    cfg: &StackConfig,
) -> Result<StackModel> {
    cfg.validate()?;
    if features.len() != cfg.level0.len() {
        return Err(Error::Dimension {
            expected: cfg.level0.len(),
            got: features.len(),
            context: "level-0 feature matrices".into(),
        });
    }
    for fm in features {
        fm.indices_of(bws_train.ids())?;
    }
    let mut folds = Vec::with_capacity(cfg.n_folds);
    for (f, (train_ids, val_ids)) in make_folds(bws_train.ids(), cfg.n_folds, cfg.seed)?
        .into_iter()
        .enumerate()
    {
        let train_pairs = fold_pairs(pairs, &train_ids);
        if train_pairs.is_empty() {
            return Err(Error::Invalid(format!("fold {f} has no training pairs")));
        }
        let val_gold = bws_train.restrict(&val_ids)?;
        let mut level0 = Vec::with_capacity(cfg.level0.len());
        for (spec, fm) in cfg.level0.iter().zip(features) {
            let val_fm;
            let val = if cfg.early_stopping && val_ids.len() >= 2 {
                val_fm = fm.subset(&val_ids)?;
                Some((&val_fm, &val_gold))
            } else {
                None
            };
            let kind = reseed(&spec.model, cfg.seed.wrapping_add(f as u64));
            level0.push(train_level0(&kind, fm, &train_ids, &train_pairs, val)?);
        }
        let inputs = level0_matrix(&level0, features, &val_ids)?;
        let meta = fit_meta(&inputs, val_gold.scores())?;
        folds.push(FoldModel {
            train_ids,
            val_ids,
            level0,
            meta,
        });
    }
    Ok(StackModel {
        config: cfg.clone(),
        folds,
    })
}

fn reseed(kind: &Level0Kind, offset: u64) -> Level0Kind {
    match kind {
        Level0Kind::Gppl(c) => Level0Kind::Gppl(GpplConfig {
            seed: c.seed.wrapping_add(offset),
            ..c.clone()
        }),
        Level0Kind::DirectRanker(c) => Level0Kind::DirectRanker(RankerConfig {
            seed: c.seed.wrapping_add(offset),
            ..c.clone()
        }),
    }
}

/// Mean over folds of the meta-model outputs for every row of the test
/// features (ids taken from `features[0]`).
pub fn predict_stacked(model: &StackModel, features: &[&FeatureMatrix]) -> Result<ScoreVector> {
    let Some(first) = features.first() else {
        return Err(Error::Invalid("no level-0 feature matrices".into()));
    };
    if features.len() != model.config.level0.len() {
        return Err(Error::Dimension {
            expected: model.config.level0.len(),
            got: features.len(),
            context: "level-0 feature matrices".into(),
        });
    }
    let ids = first.doc_ids().to_vec();
    let mut total = vec![0.0; ids.len()];
    for fold in &model.folds {
        let inputs = level0_matrix(&fold.level0, features, &ids)?;
        let out: Vec<f64> = (0..ids.len())
            .map(|i| {
                let row: Vec<f64> = inputs.row(i).iter().copied().collect();
                fold.meta.apply(&row)
            })
            .collect();
        let out = if model.config.rank_mean {
            average_ranks(&out)
        } else {
            out
        };
        for (t, v) in total.iter_mut().zip(out) {
            *t += v;
        }
    }
    let k = model.folds.len() as f64;
    ScoreVector::new(
        ids,
        total.into_iter().map(|v| v / k).collect(),
        Provenance::Stacked,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig, UtilityFn};

    #[test]
    fn folds_partition() {
        let ids: Vec<String> = (0..8).map(|i| format!("d{i}")).collect();
        let folds = make_folds(&ids, 4, 3).unwrap();
        assert_eq!(folds.len(), 4);
        let mut seen = BTreeSet::new();
        for (train, val) in &folds {
            assert_eq!(val.len(), 2);
            assert_eq!(train.len(), 6);
            assert!(val.iter().all(|v| !train.contains(v)));
            for v in val {
                assert!(seen.insert(v.clone()));
            }
        }
        assert_eq!(seen.len(), 8);
        assert_eq!(folds, make_folds(&ids, 4, 3).unwrap());
        assert!(make_folds(&ids[..3], 4, 0).is_err());
    }

    #[test]
    fn uneven_folds_differ_by_one() {
        let ids: Vec<String> = (0..11).map(|i| format!("d{i}")).collect();
        let sizes: Vec<usize> = make_folds(&ids, 4, 1)
            .unwrap()
            .iter()
            .map(|f| f.1.len())
            .collect();
        assert_eq!(sizes, vec![3, 3, 3, 2]);
    }

    #[test]
    fn exact_regression_recovers_identity() {
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let meta = fit_meta(&DMatrix::from_column_slice(12, 1, &x), &x).unwrap();
        let (w, b) = meta.raw_weights();
        assert!((w[0] - 1.0).abs() < 1e-10);
        assert!(b.abs() < 1e-10);
        assert!(!meta.fallback);
    }

    #[test]
    fn constant_input_falls_back() {
        let inputs = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let meta = fit_meta(&inputs, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(meta.fallback);
        assert_eq!(meta.weights, vec![0.5, 0.5]);
        assert!((meta.intercept - 2.5).abs() < 1e-12);
    }

    fn small_stack(seed: u64) -> (SynthConfig, StackConfig) {
        let synth = SynthConfig {
            n_docs: 40,
            pairs_total: 200,
            utility_fn: UtilityFn::GpSample,
            seed,
            ..SynthConfig::default()
        };
        let cfg = StackConfig {
            level0: vec![Level0Spec {
                name: "gppl".into(),
                model: Level0Kind::Gppl(GpplConfig {
                    n_inducing: 20,
                    max_iters: 200,
                    ..GpplConfig::default()
                }),
            }],
            seed,
            ..StackConfig::default()
        };
        (synth, cfg)
    }

    #[test]
    fn no_pair_touches_a_held_out_document() {
        let (synth, cfg) = small_stack(2);
        let c = generate(&synth).unwrap();
        let bws = compute_bws(c.features.doc_ids(), &c.pairs).unwrap();
        let model = fit_stack(&[&c.features], &c.pairs, &bws, &cfg).unwrap();
        assert_eq!(model.folds.len(), 4);
        for fold in &model.folds {
            assert_eq!(fold.meta.weights.len(), 1);
            for p in fold_pairs(&c.pairs, &fold.train_ids) {
                assert!(!fold.val_ids.contains(&p.winner));
                assert!(!fold.val_ids.contains(&p.loser));
            }
        }
    }

    #[test]
    fn single_model_stack_keeps_its_ranking() {
        let (synth, cfg) = small_stack(4);
        let c = generate(&synth).unwrap();
        let bws = compute_bws(c.features.doc_ids(), &c.pairs).unwrap();
        let mut model = fit_stack(&[&c.features], &c.pairs, &bws, &cfg).unwrap();
        // identity meta-models on every fold, and identical level-0 models
        let shared = model.folds[0].level0.clone();
        for fold in &mut model.folds {
            fold.level0 = shared.clone();
            fold.meta = MetaModel {
                means: vec![0.0],
                scales: vec![1.0],
                weights: vec![1.0],
                intercept: 0.0,
                fallback: false,
            };
        }
        let stacked = predict_stacked(&model, &[&c.features]).unwrap();
        let single = shared[0].predict(&c.features).unwrap();
        for (a, b) in stacked.scores().iter().zip(single.scores()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_rescaling_of_an_input_keeps_the_meta_prediction() {
        let x = DMatrix::from_fn(10, 2, |i, j| ((i * (j + 2)) as f64 * 0.37).cos());
        let y: Vec<f64> = (0..10).map(|i| (i as f64 * 0.5).sin()).collect();
        let a = fit_meta(&x, &y).unwrap();
        let mut x2 = x.clone();
        x2.column_mut(1).apply(|v| *v = 3.0 * *v + 7.0);
        let b = fit_meta(&x2, &y).unwrap();
        for i in 0..10 {
            let r1: Vec<f64> = x.row(i).iter().copied().collect();
            let r2: Vec<f64> = x2.row(i).iter().copied().collect();
            assert!((a.apply(&r1) - b.apply(&r2)).abs() < 1e-9);
        }
    }
}
