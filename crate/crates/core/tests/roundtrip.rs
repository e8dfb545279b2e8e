use prefrank::bws::compute_bws;
use prefrank::container::{load_model, save_model, SavedModel};
use prefrank::corpus::{pair_ids, subsample_split, PairFormat};
use prefrank::directranker::RankerConfig;
use prefrank::experiment::{run_experiment, ExperimentConfig, ModelSpec};
use prefrank::gppl::{self, GpplConfig};
use prefrank::stacking::{fit_stack, predict_stacked, Level0Kind, Level0Spec, StackConfig};
use prefrank::synth::{generate, SynthConfig, UtilityFn};

fn corpus(seed: u64) -> prefrank::synth::SynthCorpus {
    generate(&SynthConfig {
        n_docs: 40,
        pairs_total: 200,
        utility_fn: UtilityFn::GpSample,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn tiny_ranker() -> RankerConfig {
    RankerConfig {
        hidden_dims: vec![8, 4],
        max_epochs: 5,
        ..RankerConfig::default()
    }
}

#[test]
fn gppl_model_file_predicts_identically() {
    let c = corpus(1);
    let post = gppl::fit(&c.features, &c.pairs, &GpplConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gppl.model");
    save_model(&SavedModel::Gppl(post.clone()), &path).unwrap();
    let SavedModel::Gppl(loaded) = load_model(&path).unwrap() else {
        panic!("wrong model kind");
    };
    let a = gppl::predict(&post, &c.features).unwrap().to_scores();
    let b = gppl::predict(&loaded, &c.features).unwrap().to_scores();
    assert_eq!(a, b);
}

#[test]
fn stack_model_file_predicts_identically() {
    let c = corpus(2);
    let cfg = StackConfig {
        n_folds: 3,
        level0: vec![
            Level0Spec {
                name: "gppl".into(),
                model: Level0Kind::Gppl(GpplConfig::default()),
            },
            Level0Spec {
                name: "dr".into(),
                model: Level0Kind::DirectRanker(tiny_ranker()),
            },
        ],
        ..StackConfig::default()
    };
    let bws = compute_bws(&pair_ids(&c.pairs), &c.pairs).unwrap();
    let stack = fit_stack(&[&c.features, &c.features], &c.pairs, &bws, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stack.model");
    save_model(&SavedModel::Stack(stack.clone()), &path).unwrap();
    let SavedModel::Stack(loaded) = load_model(&path).unwrap() else {
        panic!("wrong model kind");
    };
    let fms = [&c.features, &c.features];
    assert_eq!(
        predict_stacked(&stack, &fms).unwrap(),
        predict_stacked(&loaded, &fms).unwrap()
    );
}

#[test]
fn split_keeps_only_pairs_inside_training_set() {
    let c = corpus(3);
    let (split, train_pairs) = subsample_split(c.features.doc_ids(), &c.pairs, 0.5, 8).unwrap();
    assert!(split.train_ids.is_disjoint(&split.test_ids));
    for p in &train_pairs {
        assert!(split.train_ids.contains(&p.winner) && split.train_ids.contains(&p.loser));
    }
}

#[test]
fn experiment_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(4);
    c.save(dir.path()).unwrap();
    let run = |out: &str| {
        let cfg = ExperimentConfig {
            seed: 17,
            out_dir: dir.path().join(out),
            fractions: vec![0.6, 0.33],
            n_repeats: 2,
            pairs: dir.path().join("pairs.tsv"),
            pair_format: PairFormat::Pairs,
            documents: None,
            features: [("base".to_string(), dir.path().join("features.tsv"))]
                .into_iter()
                .collect(),
            models: vec![
                ModelSpec::Individual {
                    name: "gppl".into(),
                    features: "base".into(),
                    model: Level0Kind::Gppl(GpplConfig::default()),
                },
                ModelSpec::Ensemble {
                    name: "dr".into(),
                    features: "base".into(),
                    model: Level0Kind::DirectRanker(tiny_ranker()),
                    n_folds: 3,
                    early_stopping: true,
                },
            ],
        };
        run_experiment(&cfg).unwrap();
        std::fs::read_to_string(dir.path().join(out).join("summary.tsv")).unwrap()
    };
    let first = run("a");
    assert_eq!(first, run("b"));
    assert_eq!(first.lines().count(), 5);
}
