//! Runs the subsampling experiment on a synthetic corpus: Spearman's rho for
//! GPPL and a DirectRanker ensemble as the training fraction shrinks.

use prefrank::corpus::PairFormat;
use prefrank::directranker::RankerConfig;
use prefrank::eval::parse_report;
use prefrank::experiment::{report_path, run_experiment, ExperimentConfig, ModelSpec};
use prefrank::gppl::GpplConfig;
use prefrank::stacking::Level0Kind;
use prefrank::synth::{generate, SynthConfig, UtilityFn};

fn main() -> prefrank::Result<()> {
    let dir = std::env::temp_dir().join("prefrank_subsampling");
    let corpus = generate(&SynthConfig {
        n_docs: 200,
        utility_fn: UtilityFn::GpSample,
        pairs_total: 2000,
        seed: 51,
        ..SynthConfig::default()
    })?;
    std::fs::create_dir_all(&dir).map_err(|e| prefrank::Error::Invalid(e.to_string()))?;
    corpus.save(&dir)?;

    let cfg = ExperimentConfig {
        seed: 52,
        out_dir: dir.join("results"),
        fractions: vec![0.6, 0.33, 0.2, 0.1],
        n_repeats: 3,
        pairs: dir.join("pairs.tsv"),
        pair_format: PairFormat::Pairs,
        documents: None,
        features: [("base".to_string(), dir.join("features.tsv"))]
            .into_iter()
            .collect(),
        models: vec![
            ModelSpec::Individual {
                name: "gppl".into(),
                features: "base".into(),
                model: Level0Kind::Gppl(GpplConfig::default()),
            },
            ModelSpec::Ensemble {
                name: "directranker_ensemble".into(),
                features: "base".into(),
                model: Level0Kind::DirectRanker(RankerConfig {
                    hidden_dims: vec![32, 16, 7],
                    max_epochs: 30,
                    ..RankerConfig::default()
                }),
                n_folds: 4,
                early_stopping: true,
            },
        ],
    };
    let table = run_experiment(&cfg)?;
    print!("{}", table.render());
    for f in &cfg.fractions {
        let runs: Vec<String> = (0..cfg.n_repeats)
            .map(|r| {
                let rep = parse_report(report_path(&cfg.out_dir, "gppl", *f, r)).unwrap();
                format!("{:.3} (n_test {})", rep.spearman, rep.n_test)
            })
            .collect();
        println!("gppl runs at {f}: {}", runs.join(", "));
    }
    println!("reports under {}", cfg.out_dir.display());
    Ok(())
}
