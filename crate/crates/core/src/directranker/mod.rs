//! Pairwise neural ranker with a shared feature network.
//!
//! Both documents of a pair pass through the same feature network (and, when
//! focus vectors are present, the same focus network), giving representations
//! `u₁`, `u₂`. A bias-free tanh output neuron compares them:
//!
//! ```text
//! o(x₁, x₂) = tanh(w · (u₁ − u₂) / 2)
//! ```
//!
//! The output is computed as `tanh((s₁ − s₂)/2)` with `s = w·u`, so it is
//! exactly zero on identical inputs, exactly antisymmetric, and its sign is
//! transitive. Training minimizes `(label − o)²` over random document pairs
//! labeled ±1 by their BWS order, using Adam.

mod net;

use log::debug;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bws::{Provenance, ScoreVector};
use crate::corpus::FeatureMatrix;
use crate::error::{Error, Result};
use crate::eval::spearman;

use net::{Adam, LayerCache, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerConfig {
    pub hidden_dims: Vec<usize>,
    /// Hidden sizes of the focus-vector network; `None` disables it.
    pub focus_hidden_dims: Option<Vec<usize>>,
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_norm: bool,
    /// Defaults to ten times the number of training documents.
    pub pairs_per_epoch: Option<usize>,
    /// Pairs per gradient step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig {
            hidden_dims: vec![2000, 500, 64, 7],
            focus_hidden_dims: None,
            learning_rate: 1e-3,
            dropout: 0.4,
            batch_norm: true,
            pairs_per_epoch: None,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad_dims = |d: &[usize]| d.is_empty() || d.contains(&0);
        if bad_dims(&self.hidden_dims) {
            return Err(Error::Config(
                "directranker.hidden_dims must be non-empty and positive".into(),
            ));
        }
        if self.focus_hidden_dims.as_deref().is_some_and(bad_dims) {
            return Err(Error::Config(
                "directranker.focus_hidden_dims must be non-empty and positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "directranker.learning_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(
                "directranker.dropout must lie in [0, 1)".into(),
            ));
        }
        if self.pairs_per_epoch == Some(0) {
            return Err(Error::Config(
                "directranker.pairs_per_epoch must be positive".into(),
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "directranker.batch_size, max_epochs and patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A labeled training pair: `label = +1` when `x1` ranks above `x2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPair {
    pub x1: String,
    pub x2: String,
    pub label: f64,
}

/// Per-column affine standardization of raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let rows: Vec<&[f64]> = rows.collect();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in scale.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        Standardizer { mean, scale }
    }

    fn columns<'a>(&self, rows: impl ExactSizeIterator<Item = &'a [f64]>) -> DMatrix<f64> {
        let dim = self.mean.len();
        let mut m = DMatrix::zeros(dim, rows.len());
        for (c, r) in rows.enumerate() {
            for j in 0..dim {
                m[(j, c)] = (r[j] - self.mean[j]) / self.scale[j];
            }
        }
        m
    }
}

/// Raw pair inputs with one sample per column.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub focus1: Option<DMatrix<f64>>,
    pub focus2: Option<DMatrix<f64>>,
    pub labels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerModel {
    config: RankerConfig,
    feature_net: Mlp,
    focus_net: Option<Mlp>,
    /// Output neuron weights, one column; no bias.
    w: DMatrix<f64>,
    feature_norm: Standardizer,
    focus_norm: Option<Standardizer>,
    epochs: usize,
    best_val_spearman: Option<f64>,
}

struct TrainForward {
    u: DMatrix<f64>,
    feature_caches: Vec<LayerCache>,
    focus_caches: Option<Vec<LayerCache>>,
    outputs: Vec<f64>,
    loss: f64,
}

impl RankerModel {
    /// A randomly initialized model with identity input standardization.
    pub fn init(feature_dim: usize, focus_dim: Option<usize>, cfg: &RankerConfig) -> Result<Self> {
        cfg.validate()?;
        if feature_dim == 0 {
            return Err(Error::Invalid("feature dimension must be positive".into()));
        }
        let focus_dim = match (&cfg.focus_hidden_dims, focus_dim) {
            (Some(_), Some(d)) if d > 0 => Some(d),
            (None, None) => None,
            (Some(_), _) => {
                return Err(Error::Invalid(
                    "focus network configured but no focus vectors given".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::Invalid(
                    "focus vectors given but no focus network configured".into(),
                ))
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let feature_net = Mlp::init(feature_dim, &cfg.hidden_dims, cfg.batch_norm, &mut rng);
        let focus_net = match (focus_dim, &cfg.focus_hidden_dims) {
            (Some(d), Some(h)) => Some(Mlp::init(d, h, cfg.batch_norm, &mut rng)),
            _ => None,
        };
        let k = feature_net.output_dim() + focus_net.as_ref().map_or(0, Mlp::output_dim);
        let bound = 1.0 / (k as f64).sqrt();
        let w = DMatrix::from_fn(k, 1, |_, _| rng.random_range(-bound..bound));
        Ok(RankerModel {
            config: cfg.clone(),
            feature_norm: Standardizer::identity(feature_dim),
            focus_norm: focus_dim.map(Standardizer::identity),
            feature_net,
            focus_net,
            w,
            epochs: 0,
            best_val_spearman: None,
        })
    }

    pub fn config(&self) -> &RankerConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_net.input_dim()
    }

    pub fn focus_dim(&self) -> Option<usize> {
        self.focus_net.as_ref().map(Mlp::input_dim)
    }

    pub fn output_weights(&self) -> Vec<f64> {
        self.w.iter().copied().collect()
    }

    pub fn set_output_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.w.nrows() {
            return Err(Error::Dimension {
                expected: self.w.nrows(),
                got: w.len(),
                context: "output weights".into(),
            });
        }
        self.w = DMatrix::from_column_slice(w.len(), 1, w);
        Ok(())
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs
    }

    pub fn best_val_spearman(&self) -> Option<f64> {
        self.best_val_spearman
    }

    /// Copies of every trainable tensor: feature net (w, b, then γ, β per
    /// normalized layer), focus net likewise, then the output weights.
    pub fn parameters(&self) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.feature_net.params().into_iter().cloned().collect();
        if let Some(f) = &self.focus_net {
            out.extend(f.params().into_iter().cloned());
        }
        out.push(self.w.clone());
        out
    }

    pub fn set_parameters(&mut self, params: &[DMatrix<f64>]) -> Result<()> {
        let mut slots = self.params_mut();
        if slots.len() != params.len() {
            return Err(Error::Dimension {
                expected: slots.len(),
                got: params.len(),
                context: "parameter tensors".into(),
            });
        }
        for (slot, p) in slots.iter().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::Invalid("parameter shape mismatch".into()));
            }
        }
        for (slot, p) in slots.iter_mut().zip(params) {
            slot.copy_from(p);
        }
        Ok(())
    }

    fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out = self.feature_net.params_mut();
        if let Some(f) = &mut self.focus_net {
            out.extend(f.params_mut());
        }
        out.push(&mut self.w);
        out
    }

    fn check_dim(expected: usize, got: usize, context: &str) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected,
                got,
                context: context.into(),
            })
        }
    }

    /// Evaluation-mode representations `(u, u_f)` stacked per column.
    fn represent(&self, x: &DMatrix<f64>, focus: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let u = self.feature_net.forward_eval(x);
        match (&self.focus_net, focus) {
            (Some(net), Some(f)) => stack_rows(&u, &net.forward_eval(f)),
            _ => u,
        }
    }

    fn utilities(&self, x: &DMatrix<f64>, focus: Option<&DMatrix<f64>>) -> Vec<f64> {
        (self.w.transpose() * self.represent(x, focus))
            .iter()
            .copied()
            .collect()
    }

    fn single(&self, f: &[f64], focus: Option<&[f64]>) -> Result<f64> {
        Self::check_dim(self.feature_dim(), f.len(), "feature vector")?;
        let x = self.feature_norm.columns(std::iter::once(f));
        let fx = match (&self.focus_norm, focus) {
            (Some(norm), Some(v)) => {
                Self::check_dim(norm.mean.len(), v.len(), "focus vector")?;
                Some(norm.columns(std::iter::once(v)))
            }
            (None, None) => None,
            (Some(_), None) => return Err(Error::Invalid("model expects focus vectors".into())),
            (None, Some(_)) => return Err(Error::Invalid("model has no focus network".into())),
        };
        Ok(self.utilities(&x, fx.as_ref())[0])
    }

    /// Ranking output for one pair in evaluation mode, in (−1, 1).
    pub fn forward_pair(
        &self,
        f1: &[f64],
        f2: &[f64],
        focus1: Option<&[f64]>,
        focus2: Option<&[f64]>,
    ) -> Result<f64> {
        let s1 = self.single(f1, focus1)?;
        let s2 = self.single(f2, focus2)?;
        Ok(((s1 - s2) / 2.0).tanh())
    }

    /// Document scores `tanh(w·u)` in evaluation mode.
    pub fn predict_scores(&self, features: &FeatureMatrix) -> Result<ScoreVector> {
        Self::check_dim(self.feature_dim(), features.dim(), "feature matrix")?;
        let x = self
            .feature_norm
            .columns((0..features.len()).map(|i| features.row(i)));
        let fx = match &self.focus_norm {
            Some(norm) => {
                let rows: Vec<&[f64]> = (0..features.len())
                    .map(|i| {
                        features
                            .focus_row(i)
                            .ok_or_else(|| Error::Invalid("model expects focus vectors".into()))
                    })
                    .collect::<Result<_>>()?;
                Self::check_dim(
                    norm.mean.len(),
                    rows.first().map_or(norm.mean.len(), |r| r.len()),
                    "focus vectors",
                )?;
                Some(norm.columns(rows.into_iter()))
            }
            None => None,
        };
        let scores = self
            .utilities(&x, fx.as_ref())
            .into_iter()
            .map(f64::tanh)
            .collect();
        ScoreVector::new(
            features.doc_ids().to_vec(),
            scores,
            Provenance::DirectRanker,
        )
    }

    fn forward_train_batch<R: Rng>(&self, batch: &PairBatch, rng: &mut R) -> Result<TrainForward> {
        let b = batch.labels.len();
        if b == 0 || batch.x1.ncols() != b || batch.x2.ncols() != b {
            return Err(Error::Invalid(
                "pair batch columns must match the label count".into(),
            ));
        }
        Self::check_dim(self.feature_dim(), batch.x1.nrows(), "batch features")?;
        Self::check_dim(self.feature_dim(), batch.x2.nrows(), "batch features")?;
        let norm_cols = |norm: &Standardizer, m: &DMatrix<f64>| {
            let rows: Vec<Vec<f64>> = m
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect();
            norm.columns(rows.iter().map(Vec::as_slice))
        };
        // both branches share one network pass so they share batch statistics
        let x = stack_cols(
            &norm_cols(&self.feature_norm, &batch.x1),
            &norm_cols(&self.feature_norm, &batch.x2),
        );
        let (mut u, feature_caches) = self.feature_net.forward_train(&x, self.config.dropout, rng);
        let mut focus_caches = None;
        if let (Some(net), Some(norm)) = (&self.focus_net, &self.focus_norm) {
            let (Some(f1), Some(f2)) = (&batch.focus1, &batch.focus2) else {
                return Err(Error::Invalid("model expects focus vectors".into()));
            };
            Self::check_dim(net.input_dim(), f1.nrows(), "batch focus")?;
            Self::check_dim(net.input_dim(), f2.nrows(), "batch focus")?;
            let fx = stack_cols(&norm_cols(norm, f1), &norm_cols(norm, f2));
            let (uf, caches) = net.forward_train(&fx, self.config.dropout, rng);
            u = stack_rows(&u, &uf);
            focus_caches = Some(caches);
        }
        let s = self.w.transpose() * &u;
        let outputs: Vec<f64> = (0..b).map(|i| ((s[i] - s[b + i]) / 2.0).tanh()).collect();
        let loss = outputs
            .iter()
            .zip(&batch.labels)
            .map(|(o, y)| loss(*y, *o))
            .sum::<f64>()
            / b as f64;
        Ok(TrainForward {
            u,
            feature_caches,
            focus_caches,
            outputs,
            loss,
        })
    }

    fn backward(&self, batch: &PairBatch, fwd: &TrainForward) -> Vec<DMatrix<f64>> {
        let b = batch.labels.len();
        let mut ds = DMatrix::zeros(1, 2 * b);
        for (i, (o, y)) in fwd.outputs.iter().zip(&batch.labels).enumerate() {
            let g = -2.0 * (y - o) / b as f64 * (1.0 - o * o) / 2.0;
            ds[i] = g;
            ds[b + i] = -g;
        }
        let dw = &fwd.u * ds.transpose();
        let du = &self.w * &ds;
        let k = self.feature_net.output_dim();
        let mut grads = self
            .feature_net
            .backward(&fwd.feature_caches, du.rows(0, k).into_owned());
        if let (Some(net), Some(caches)) = (&self.focus_net, &fwd.focus_caches) {
            grads.extend(net.backward(caches, du.rows(k, du.nrows() - k).into_owned()));
        }
        grads.push(dw);
        grads
    }

    /// Mean pair loss in training mode and its gradient with respect to
    /// [`RankerModel::parameters`]. `dropout_seed` fixes the dropout masks.
    pub fn loss_gradient(
        &self,
        batch: &PairBatch,
        dropout_seed: u64,
    ) -> Result<(f64, Vec<DMatrix<f64>>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let fwd = self.forward_train_batch(batch, &mut rng)?;
        Ok((fwd.loss, self.backward(batch, &fwd)))
    }
}

fn stack_cols(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// The ranking output for given representations and output weights.
pub fn ranking_output(w: &[f64], u1: &[f64], u2: &[f64]) -> f64 {
    let d: f64 = w
        .iter()
        .zip(u1.iter().zip(u2))
        .map(|(w, (a, b))| w * (a - b))
        .sum();
    (d / 2.0).tanh()
}

/// Squared error between a ±1 label and the ranking output.
pub fn loss(label: f64, o1: f64) -> f64 {
    (label - o1) * (label - o1)
}

fn draw_pairs<R: Rng>(scores: &[f64], n: usize, rng: &mut R) -> Result<Vec<(usize, usize, f64)>> {
    let distinct = scores.iter().any(|s| *s != scores[0]);
    if scores.len() < 2 || !distinct {
        return Err(Error::Invalid(
            "pair generation needs at least two documents with distinct scores".into(),
        ));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = rng.random_range(0..scores.len());
        let mut b = rng.random_range(0..scores.len() - 1);
        if b >= a {
            b += 1;
        }
        if scores[a] == scores[b] {
            continue;
        }
        out.push((a, b, if scores[a] > scores[b] { 1.0 } else { -1.0 }));
    }
    Ok(out)
}

/// `n` pairs drawn uniformly with replacement among documents with different
/// scores, labeled `+1` when the first document scores higher.
pub fn generate_training_pairs(
    scores: &ScoreVector,
    n: usize,
    seed: u64,
) -> Result<Vec<TrainPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = scores.ids();
    Ok(draw_pairs(scores.scores(), n, &mut rng)?
        .into_iter()
        .map(|(a, b, label)| TrainPair {
            x1: ids[a].clone(),
            x2: ids[b].clone(),
            label,
        })
        .collect())
}

/// Validation data for early stopping: features and gold scores.
pub type Validation<'a> = (&'a FeatureMatrix, &'a ScoreVector);

/// Trains on pairs drawn from `bws_scores`. With `val`, stops when validation
/// Spearman's ρ has not improved for `patience` epochs and restores the best
/// epoch's weights.
pub fn train(
    features: &FeatureMatrix,
    bws_scores: &ScoreVector,
    cfg: &RankerConfig,
    val: Option<Validation<'_>>,
) -> Result<RankerModel> {
    cfg.validate()?;
    let rows = features.indices_of(bws_scores.ids())?;
    let use_focus = cfg.focus_hidden_dims.is_some();
    if use_focus && !features.has_focus() {
        return Err(Error::Invalid(
            "focus network configured but features carry no focus vectors".into(),
        ));
    }
    let mut model = RankerModel::init(
        features.dim(),
        if use_focus {
            features.focus_dim()
        } else {
            None
        },
        cfg,
    )?;
    model.feature_norm = Standardizer::fit(rows.iter().map(|&i| features.row(i)), features.dim());
    if use_focus {
        let dim = features.focus_dim().unwrap_or(0);
        model.focus_norm = Some(Standardizer::fit(
            rows.iter().filter_map(|&i| features.focus_row(i)),
            dim,
        ));
    }
    if let Some((vf, vg)) = val {
        vf.indices_of(vg.ids())?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_d12a);
    let per_epoch = cfg.pairs_per_epoch.unwrap_or(10 * rows.len());
    let scores = bws_scores.scores();
    let mut adam = Adam::new(
        cfg.learning_rate,
        &model.parameters().iter().collect::<Vec<_>>(),
    );
    let mut best: Option<(f64, RankerModel)> = None;
    let mut stale = 0;

    for epoch in 0..cfg.max_epochs {
        let pairs = draw_pairs(scores, per_epoch, &mut rng)?;
        let mut epoch_loss = 0.0;
        for chunk in pairs.chunks(cfg.batch_size) {
            let batch = gather(features, &rows, chunk, use_focus);
            let fwd = model.forward_train_batch(&batch, &mut rng)?;
            if !fwd.loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss in epoch {epoch}"
                )));
            }
            let grads = model.backward(&batch, &fwd);
            adam.step(model.params_mut(), &grads);
            model.feature_net.update_running_stats(&fwd.feature_caches);
            if let (Some(net), Some(c)) = (&mut model.focus_net, &fwd.focus_caches) {
                net.update_running_stats(c);
            }
            epoch_loss += fwd.loss * chunk.len() as f64;
        }
        model.epochs = epoch + 1;
        epoch_loss /= pairs.len() as f64;

        let Some((vf, vg)) = val else {
            debug!("directranker epoch {epoch}: loss {epoch_loss:.5}");
            continue;
        };
        let pred = model.predict_scores(&vf.subset(vg.ids())?)?;
        let rho = if vg.len() >= 2 {
            spearman(&pred, vg)?
        } else {
            0.0
        };
        debug!("directranker epoch {epoch}: loss {epoch_loss:.5}, val rho {rho:.4}");
        if best.as_ref().is_none_or(|(b, _)| rho > *b) {
            let mut snapshot = model.clone();
            snapshot.best_val_spearman = Some(rho);
            best = Some((rho, snapshot));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(match best {
        Some((_, mut m)) => {
            m.epochs = model.epochs;
            m
        }
        None => model,
    })
}

fn gather(
    features: &FeatureMatrix,
    rows: &[usize],
    chunk: &[(usize, usize, f64)],
    focus: bool,
) -> PairBatch {
    let cols = |pick: fn(&(usize, usize, f64)) -> usize| {
        let data: Vec<f64> = chunk
            .iter()
            .flat_map(|p| features.row(rows[pick(p)]).iter().copied())
            .collect();
        DMatrix::from_column_slice(features.dim(), chunk.len(), &data)
    };
    let focus_cols = |pick: fn(&(usize, usize, f64)) -> usize| {
        let dim = features.focus_dim()?;
        let data: Vec<f64> = chunk
            .iter()
            .flat_map(|p| {
                features
                    .focus_row(rows[pick(p)])
                    .unwrap_or(&[])
                    .iter()
                    .copied()
            })
            .collect();
        Some(DMatrix::from_column_slice(dim, chunk.len(), &data))
    };
    PairBatch {
        x1: cols(|p| p.0),
        x2: cols(|p| p.1),
        focus1: if focus { focus_cols(|p| p.0) } else { None },
        focus2: if focus { focus_cols(|p| p.1) } else { None },
        labels: chunk.iter().map(|p| p.2).collect(),
    }
}
