//! The subsampling experiment: for each training fraction and repeat, split
//! document ids, train every configured model on pairs among the training
//! ids, and score its ranking of the held-out ids against BWS gold.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bws::{compute_bws, Provenance, ScoreVector};
use crate::corpus::{
    load_documents, load_features, load_pairs, pair_ids, subsample_split, write_file,
    FeatureMatrix, PairFormat, PairLabel,
};
use crate::directranker::RankerConfig;
use crate::error::{Error, Result};
use crate::eval::{emit_report, evaluate, EvalReport};
use crate::gppl::GpplConfig;
use crate::stacking::{
    fit_stack, fold_pairs, make_folds, predict_stacked, train_level0, Level0Kind, Level0Spec,
    StackConfig,
};

/// Stable per-stage seed: the first eight bytes of SHA-256 over the master
/// seed and the stage name.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn default_folds() -> usize {
    4
}

fn default_true() -> bool {
    true
}

/// A level-0 model bound to a named feature representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackInput {
    pub name: String,
    pub features: String,
    pub model: Level0Kind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    /// One model trained on all training pairs.
    Individual {
        name: String,
        features: String,
        model: Level0Kind,
    },
    /// Mean score of models trained on the training folds of a
    /// cross-validation split.
    Ensemble {
        name: String,
        features: String,
        model: Level0Kind,
        #[serde(default = "default_folds")]
        n_folds: usize,
        #[serde(default = "default_true")]
        early_stopping: bool,
    },
    Stack {
        name: String,
        level0: Vec<StackInput>,
        #[serde(default = "default_folds")]
        n_folds: usize,
        #[serde(default)]
        rank_mean: bool,
        #[serde(default = "default_true")]
        early_stopping: bool,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &str {
        match self {
            ModelSpec::Individual { name, .. }
            | ModelSpec::Ensemble { name, .. }
            | ModelSpec::Stack { name, .. } => name,
        }
    }

    fn representations(&self) -> Vec<&str> {
        match self {
            ModelSpec::Individual { features, .. } | ModelSpec::Ensemble { features, .. } => {
                vec![features.as_str()]
            }
            ModelSpec::Stack { level0, .. } => level0.iter().map(|l| l.features.as_str()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
    pub pairs: PathBuf,
    #[serde(default = "default_format")]
    pub pair_format: PairFormat,
    /// Optional document file fixing the id universe; otherwise the ids
    /// that appear in `pairs`.
    #[serde(default)]
    pub documents: Option<PathBuf>,
    /// Feature files by representation name.
    pub features: BTreeMap<String, PathBuf>,
    pub models: Vec<ModelSpec>,
}

fn default_fractions() -> Vec<f64> {
    vec![0.6, 0.33, 0.2, 0.1]
}

fn default_repeats() -> usize {
    3
}

fn default_format() -> PairFormat {
    PairFormat::Pairs
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() || self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::Config(
                "fractions must be non-empty and lie in (0, 1]".into(),
            ));
        }
        if self.n_repeats == 0 {
            return Err(Error::Config("n_repeats must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models configured".into()));
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.models {
            if !names.insert(m.name()) {
                return Err(Error::Config(format!("duplicate model name {}", m.name())));
            }
            for r in m.representations() {
                if !self.features.contains_key(r) {
                    return Err(Error::Config(format!(
                        "model {} uses undeclared features {r:?}",
                        m.name()
                    )));
                }
            }
            match m {
                ModelSpec::Individual { model, .. } | ModelSpec::Ensemble { model, .. } => {
                    validate_kind(model)?
                }
                ModelSpec::Stack { level0, .. } => {
                    for l in level0 {
                        validate_kind(&l.model)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.pairs);
        if let Some(d) = &mut self.documents {
            fix(d);
        }
        for p in self.features.values_mut() {
            fix(p);
        }
    }
}

fn validate_kind(k: &Level0Kind) -> Result<()> {
    match k {
        Level0Kind::Gppl(c) => c.validate(),
        Level0Kind::DirectRanker(c) => c.validate(),
    }
}

/// Reads a TOML experiment file; relative paths are taken relative to it.
pub fn load_experiment_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.rebase(path.parent().unwrap_or(Path::new(".")));
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub fraction: f64,
    pub mean: f64,
    /// Sample standard deviation over repeats; zero for a single run.
    pub std: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, model: &str, fraction: f64) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.fraction == fraction)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("model\tfraction\tmean_spearman\tstd_spearman\tn_runs\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{:.4}\t{:.4}\t{}\n",
                r.model, r.fraction, r.mean, r.std, r.n_runs
            ));
        }
        out
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Everything a single run needs, independent of the model.
pub struct RunData<'a> {
    pub features: &'a BTreeMap<String, FeatureMatrix>,
    pub train_ids: Vec<String>,
    pub train_pairs: Vec<PairLabel>,
    pub bws_train: ScoreVector,
    pub eval_ids: Vec<String>,
}

fn with_seed(kind: &Level0Kind, seed: u64) -> Level0Kind {
    match kind {
        Level0Kind::Gppl(c) => Level0Kind::Gppl(GpplConfig { seed, ..c.clone() }),
        Level0Kind::DirectRanker(c) => Level0Kind::DirectRanker(RankerConfig { seed, ..c.clone() }),
    }
}

/// Trains `spec` on the run's training data and scores the evaluation ids.
pub fn run_model(spec: &ModelSpec, data: &RunData<'_>, seed: u64) -> Result<ScoreVector> {
    let fm = |name: &str| -> Result<&FeatureMatrix> {
        data.features
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown features {name:?}")))
    };
    match spec {
        ModelSpec::Individual {
            features, model, ..
        } => {
            let f = fm(features)?;
            let m = train_level0(
                &with_seed(model, seed),
                f,
                &data.train_ids,
                &data.train_pairs,
                None,
            )?;
            m.predict(&f.subset(&data.eval_ids)?)
        }
        ModelSpec::Ensemble {
            features,
            model,
            n_folds,
            early_stopping,
            ..
        } => {
            let f = fm(features)?;
            let eval_f = f.subset(&data.eval_ids)?;
            let mut total = vec![0.0; data.eval_ids.len()];
            let folds = make_folds(&data.train_ids, *n_folds, seed)?;
            for (k, (train, val)) in folds.iter().enumerate() {
                let pairs = fold_pairs(&data.train_pairs, train);
                if pairs.is_empty() {
                    return Err(Error::Invalid(format!(
                        "ensemble fold {k} has no training pairs"
                    )));
                }
                let val_gold = data.bws_train.restrict(val)?;
                let val_f;
                let v = if *early_stopping && val.len() >= 2 {
                    val_f = f.subset(val)?;
                    Some((&val_f, &val_gold))
                } else {
                    None
                };
                let kind = with_seed(model, seed.wrapping_add(k as u64 + 1));
                let m = train_level0(&kind, f, train, &pairs, v)?;
                for (t, s) in total.iter_mut().zip(m.predict(&eval_f)?.scores()) {
                    *t += s;
                }
            }
            let k = folds.len() as f64;
            ScoreVector::new(
                data.eval_ids.clone(),
                total.into_iter().map(|v| v / k).collect(),
                provenance_of(model),
            )
        }
        ModelSpec::Stack {
            level0,
            n_folds,
            rank_mean,
            early_stopping,
            ..
        } => {
            let cfg = StackConfig {
                n_folds: *n_folds,
                level0: level0
                    .iter()
                    .map(|l| Level0Spec {
                        name: l.name.clone(),
                        model: l.model.clone(),
                    })
                    .collect(),
                rank_mean: *rank_mean,
                early_stopping: *early_stopping,
                seed,
            };
            let fms: Vec<&FeatureMatrix> = level0
                .iter()
                .map(|l| fm(&l.features))
                .collect::<Result<_>>()?;
            let model = fit_stack(&fms, &data.train_pairs, &data.bws_train, &cfg)?;
            let eval: Vec<FeatureMatrix> = fms
                .iter()
                .map(|f| f.subset(&data.eval_ids))
                .collect::<Result<_>>()?;
            predict_stacked(&model, &eval.iter().collect::<Vec<_>>())
        }
    }
}

fn load<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(stage))
}

fn provenance_of(kind: &Level0Kind) -> Provenance {
    match kind {
        Level0Kind::Gppl(_) => Provenance::Gppl,
        Level0Kind::DirectRanker(_) => Provenance::DirectRanker,
    }
}

pub fn report_path(out_dir: &Path, model: &str, fraction: f64, repeat: usize) -> PathBuf {
    out_dir
        .join("reports")
        .join(format!("{model}_f{fraction}_r{repeat}.txt"))
}

/// Runs every fraction × repeat × model, writing one report per run under
/// `out_dir/reports` as it completes and `out_dir/summary.tsv` at the end.
/// The first failing stage aborts the run; reports already written remain.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SummaryTable> {
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    let pairs = load("load pairs", load_pairs(&cfg.pairs, cfg.pair_format))?;
    let ids = match &cfg.documents {
        Some(p) => load("load documents", load_documents(p).map(|c| c.ids()))?,
        None => pair_ids(&pairs),
    };
    let mut features = BTreeMap::new();
    for (name, path) in &cfg.features {
        let fm = load(&format!("load features {name}"), load_features(path))?;
        load(
            &format!("load features {name}"),
            fm.indices_of(&ids).map(|_| ()),
        )?;
        features.insert(name.clone(), fm);
    }
    let gold_all = load("gold bws", compute_bws(&ids, &pairs))?;

    let mut results: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (fi, &fraction) in cfg.fractions.iter().enumerate() {
        for repeat in 0..cfg.n_repeats {
            let tag = format!("f{fraction}/r{repeat}");
            let split_seed = derive_seed(cfg.seed, &format!("split/{tag}"));
            let (split, train_pairs) = load(
                &format!("split {tag}"),
                subsample_split(&ids, &pairs, fraction, split_seed),
            )?;
            let train_ids: Vec<String> = split.train_ids.iter().cloned().collect();
            let mut eval_ids: Vec<String> = split.test_ids.iter().cloned().collect();
            if eval_ids.len() < 2 {
                warn!("split {tag} leaves fewer than two test documents; evaluating on training documents");
                eval_ids = train_ids.clone();
            }
            let gold = load(&format!("gold {tag}"), gold_all.restrict(&eval_ids))?;
            let bws_train = load(
                &format!("train bws {tag}"),
                compute_bws(&train_ids, &train_pairs),
            )?;
            let data = RunData {
                features: &features,
                train_ids,
                train_pairs,
                bws_train,
                eval_ids,
            };
            for (mi, spec) in cfg.models.iter().enumerate() {
                let stage = format!("{} {tag}", spec.name());
                let seed = derive_seed(cfg.seed, &format!("model/{}/{tag}", spec.name()));
                let pred = run_model(spec, &data, seed).map_err(|e| e.at_stage(&stage))?;
                let report: EvalReport =
                    evaluate(spec.name(), &pred, &gold, Some(fraction), Some(seed))
                        .map_err(|e| e.at_stage(&stage))?;
                info!("{stage}: spearman {:.4}", report.spearman);
                emit_report(
                    &report,
                    report_path(&cfg.out_dir, spec.name(), fraction, repeat),
                )
                .map_err(|e| e.at_stage(&stage))?;
                results.entry((mi, fi)).or_default().push(report.spearman);
            }
        }
    }

    let mut table = SummaryTable::default();
    for (mi, spec) in cfg.models.iter().enumerate() {
        for (fi, &fraction) in cfg.fractions.iter().enumerate() {
            let v = &results[&(mi, fi)];
            let (mean, std) = mean_std(v);
            table.rows.push(SummaryRow {
                model: spec.name().to_string(),
                fraction,
                mean,
                std,
                n_runs: v.len(),
            });
        }
    }
    write_file(&cfg.out_dir.join("summary.tsv"), table.render().as_bytes())
        .map_err(|e| e.at_stage("summary"))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(
            derive_seed(7, "split/f0.6/r0"),
            derive_seed(7, "split/f0.6/r0")
        );
        assert_ne!(
            derive_seed(7, "split/f0.6/r0"),
            derive_seed(7, "split/f0.6/r1")
        );
        assert_ne!(derive_seed(7, "a"), derive_seed(8, "a"));
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
    }

    #[test]
    fn config_parses_with_defaults() {
        let text = r#"
            seed = 3
            out_dir = "out"
            pairs = "pairs.tsv"

            [features]
            se = "se.tsv"

            [[models]]
            type = "individual"
            name = "gppl_se"
            features = "se"
            model = { gppl = { n_inducing = 50 } }

            [[models]]
            type = "stack"
            name = "stack"
            level0 = [
                { name = "g", features = "se", model = { gppl = {} } },
                { name = "d", features = "se", model = { directranker = { hidden_dims = [8, 4] } } },
            ]
        "#;
        let mut cfg: ExperimentConfig = toml::from_str(text).unwrap();
        cfg.rebase(Path::new("/data"));
        cfg.validate().unwrap();
        assert_eq!(cfg.fractions, vec![0.6, 0.33, 0.2, 0.1]);
        assert_eq!(cfg.n_repeats, 3);
        assert_eq!(cfg.pairs, PathBuf::from("/data/pairs.tsv"));
        match &cfg.models[0] {
            ModelSpec::Individual {
                model: Level0Kind::Gppl(g),
                ..
            } => assert_eq!(g.n_inducing, 50),
            other => panic!("unexpected {other:?}"),
        }
        match &cfg.models[1] {
            ModelSpec::Stack {
                n_folds, level0, ..
            } => {
                assert_eq!(*n_folds, 4);
                assert_eq!(level0.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_rejects_unknown_features_and_bad_fractions() {
        let base = r#"
            out_dir = "o"
            pairs = "p"
            [features]
            se = "se.tsv"
            [[models]]
            type = "individual"
            name = "m"
            features = "mwe"
            model = { gppl = {} }
        "#;
        let cfg: ExperimentConfig = toml::from_str(base).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: ExperimentConfig = toml::from_str(&format!(
            "fractions = [0.0]\n{}",
            base.replace("\"mwe\"", "\"se\"")
        ))
        .unwrap();
        assert!(cfg.validate().is_err());
    }
}
