//! Command-line front end used by the `prefrank` binary.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::bws::{compute_bws, load_scores, save_scores, Provenance};
use crate::container::{load_model, save_model, SavedModel};
use crate::corpus::{
    load_features, load_pairs, pair_ids, save_pairs, subsample_split, write_file, FeatureMatrix,
    PairFormat,
};
use crate::directranker::{self, RankerConfig};
use crate::error::{Error, Result};
use crate::eval::{emit_report, evaluate};
use crate::experiment::{load_experiment_config, run_experiment};
use crate::gppl::{self, GpplConfig};
use crate::stacking::{fit_stack, predict_stacked, Level0Kind, Level0Spec, StackConfig};
use crate::synth::{generate, SynthConfig};

#[derive(Debug, Parser)]
#[command(
    name = "prefrank",
    version,
    about = "Rank documents from pairwise preference labels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed overriding the one in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration with optional [synth], [gppl], [directranker] and
    /// [stacking] sections; for `experiment`, the experiment file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Gppl,
    Directranker,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Best-worst scaling scores from pairwise counts.
    Bws {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value = "pairs")]
        format: PairFormat,
    },
    /// Synthetic corpus: features.tsv, pairs.tsv and truth.tsv.
    Synth {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Random train/test split of document ids.
    Subsample {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value = "pairs")]
        format: PairFormat,
        #[arg(long)]
        fraction: f64,
    },
    /// Trains a GPPL or DirectRanker model.
    Train {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value = "pairs")]
        format: PairFormat,
        /// Gold scores for DirectRanker early stopping.
        #[arg(long)]
        val_gold: Option<PathBuf>,
    },
    /// Scores every document of the feature file(s) with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// One file, or one per level-0 model for a stack.
        #[arg(long, required = true)]
        features: Vec<PathBuf>,
    },
    /// Trains a stack; each --level0 is KIND:FEATURES.
    Stack {
        #[arg(long, required = true)]
        level0: Vec<String>,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value = "pairs")]
        format: PairFormat,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Spearman, MRD and score histogram of a prediction against gold.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value = "model")]
        model_id: String,
    },
    /// Runs the subsampling experiment described by --config.
    Experiment,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModuleConfig {
    synth: SynthConfig,
    gppl: GpplConfig,
    directranker: RankerConfig,
    stacking: StackSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StackSection {
    n_folds: usize,
    rank_mean: bool,
    early_stopping: bool,
}

impl Default for StackSection {
    fn default() -> Self {
        let d = StackConfig::default();
        StackSection {
            n_folds: d.n_folds,
            rank_mean: d.rank_mean,
            early_stopping: d.early_stopping,
        }
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

fn module_config(path: Option<&Path>) -> Result<ModuleConfig> {
    let Some(path) = path else {
        return Ok(ModuleConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn require_out(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref().ok_or_else(|| {
        Error::Config("--out is required for this command".into()).at_stage("config")
    })
}

fn load_training(
    features: &Path,
    pairs: &Path,
    format: PairFormat,
) -> Result<(FeatureMatrix, Vec<crate::corpus::PairLabel>)> {
    let fm = stage("load features", load_features(features))?;
    let pairs = stage("load pairs", load_pairs(pairs, format))?;
    Ok((fm, pairs))
}

/// Parses arguments and runs one command.
pub fn run(cli: Cli) -> Result<()> {
    let Common { seed, config, out } = cli.common;
    match cli.command {
        Command::Bws { pairs, format } => {
            let pairs = stage("load pairs", load_pairs(&pairs, format))?;
            let scores = stage("bws", compute_bws(&pair_ids(&pairs), &pairs))?;
            stage("write scores", save_scores(&scores, require_out(&out)?))
        }
        Command::Synth { out_dir } => {
            let mut cfg = stage("config", module_config(config.as_deref()))?.synth;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out_dir
                .or(out)
                .ok_or_else(|| Error::Config("--out-dir is required".into()).at_stage("config"))?;
            let corpus = stage("synth", generate(&cfg))?;
            stage("write corpus", corpus.save(&dir))
        }
        Command::Subsample {
            pairs,
            format,
            fraction,
        } => {
            let pairs = stage("load pairs", load_pairs(&pairs, format))?;
            let (split, train_pairs) = stage(
                "subsample",
                subsample_split(&pair_ids(&pairs), &pairs, fraction, seed.unwrap_or(0)),
            )?;
            let dir = require_out(&out)?;
            let lines =
                |ids: &BTreeSet<String>| ids.iter().map(|i| format!("{i}\n")).collect::<String>();
            stage(
                "write split",
                write_file(
                    &dir.join("train_ids.txt"),
                    lines(&split.train_ids).as_bytes(),
                ),
            )?;
            stage(
                "write split",
                write_file(&dir.join("test_ids.txt"), lines(&split.test_ids).as_bytes()),
            )?;
            stage(
                "write split",
                save_pairs(&train_pairs, dir.join("train_pairs.tsv")),
            )
        }
        Command::Train {
            model,
            features,
            pairs,
            format,
            val_gold,
        } => {
            let mc = stage("config", module_config(config.as_deref()))?;
            let (fm, pairs) = load_training(&features, &pairs, format)?;
            let saved = match model {
                ModelArg::Gppl => {
                    let mut cfg = mc.gppl;
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    SavedModel::Gppl(stage("train gppl", gppl::fit(&fm, &pairs, &cfg))?)
                }
                ModelArg::Directranker => {
                    let mut cfg = mc.directranker;
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    let bws = stage("bws", compute_bws(&pair_ids(&pairs), &pairs))?;
                    let gold = match &val_gold {
                        Some(p) => Some(stage(
                            "load validation gold",
                            load_scores(p, Provenance::External),
                        )?),
                        None => None,
                    };
                    let val = gold.as_ref().map(|g| (&fm, g));
                    SavedModel::DirectRanker(stage(
                        "train directranker",
                        directranker::train(&fm, &bws, &cfg, val),
                    )?)
                }
            };
            stage("write model", save_model(&saved, require_out(&out)?))
        }
        Command::Predict { model, features } => {
            let model = stage("load model", load_model(&model))?;
            let fms: Vec<FeatureMatrix> = features
                .iter()
                .map(|p| stage("load features", load_features(p)))
                .collect::<Result<_>>()?;
            let single = || {
                if fms.len() == 1 {
                    Ok(&fms[0])
                } else {
                    Err(Error::Invalid(
                        "this model takes exactly one feature file".into(),
                    ))
                }
            };
            let scores = match &model {
                SavedModel::Gppl(p) => {
                    stage("predict", single().and_then(|f| gppl::predict(p, f)))?.to_scores()
                }
                SavedModel::DirectRanker(m) => {
                    stage("predict", single().and_then(|f| m.predict_scores(f)))?
                }
                SavedModel::Stack(s) => stage(
                    "predict",
                    predict_stacked(s, &fms.iter().collect::<Vec<_>>()),
                )?,
            };
            stage("write scores", save_scores(&scores, require_out(&out)?))
        }
        Command::Stack {
            level0,
            pairs,
            format,
            folds,
        } => {
            let mc = stage("config", module_config(config.as_deref()))?;
            let pairs = stage("load pairs", load_pairs(&pairs, format))?;
            let mut specs = Vec::new();
            let mut fms = Vec::new();
            for (i, entry) in level0.iter().enumerate() {
                let (kind, path) = entry.split_once(':').ok_or_else(|| {
                    Error::Config(format!("--level0 {entry:?} is not KIND:FEATURES"))
                        .at_stage("config")
                })?;
                let model = match kind {
                    "gppl" => Level0Kind::Gppl(mc.gppl.clone()),
                    "directranker" => Level0Kind::DirectRanker(mc.directranker.clone()),
                    other => {
                        return Err(Error::Config(format!("unknown level-0 kind {other:?}"))
                            .at_stage("config"))
                    }
                };
                specs.push(Level0Spec {
                    name: format!("{kind}_{i}"),
                    model,
                });
                fms.push(stage("load features", load_features(path))?);
            }
            let cfg = StackConfig {
                n_folds: folds.unwrap_or(mc.stacking.n_folds),
                level0: specs,
                rank_mean: mc.stacking.rank_mean,
                early_stopping: mc.stacking.early_stopping,
                seed: seed.unwrap_or(0),
            };
            let bws = stage("bws", compute_bws(&pair_ids(&pairs), &pairs))?;
            let model = stage(
                "stack",
                fit_stack(&fms.iter().collect::<Vec<_>>(), &pairs, &bws, &cfg),
            )?;
            stage(
                "write model",
                save_model(&SavedModel::Stack(model), require_out(&out)?),
            )
        }
        Command::Eval {
            pred,
            gold,
            model_id,
        } => {
            let pred = stage("load prediction", load_scores(&pred, Provenance::External))?;
            let gold = stage("load gold", load_scores(&gold, Provenance::Bws))?;
            let report = stage("eval", evaluate(&model_id, &pred, &gold, None, seed))?;
            stage("write report", emit_report(&report, require_out(&out)?))
        }
        Command::Experiment => {
            let path = config
                .ok_or_else(|| Error::Config("--config is required".into()).at_stage("config"))?;
            let mut cfg = stage("config", load_experiment_config(&path))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let table = run_experiment(&cfg)?;
            print!("{}", table.render());
            Ok(())
        }
    }
}

/// Entry point for the binary: returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
