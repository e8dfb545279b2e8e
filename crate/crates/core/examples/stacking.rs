//! Stacks GPPL on informative features with DirectRanker on noisy ones and
//! prints the meta-model weights of each fold.

use prefrank::bws::compute_bws;
use prefrank::corpus::{subsample_split, FeatureMatrix};
use prefrank::directranker::RankerConfig;
use prefrank::eval::spearman;
use prefrank::gppl::GpplConfig;
use prefrank::stacking::{fit_stack, predict_stacked, Level0Kind, Level0Spec, StackConfig};
use prefrank::synth::{generate, SynthConfig, UtilityFn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> prefrank::Result<()> {
    let corpus = generate(&SynthConfig {
        utility_fn: UtilityFn::GpSample,
        seed: 2,
        ..SynthConfig::default()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let fm = &corpus.features;
    let noisy = FeatureMatrix::new(
        fm.doc_ids().to_vec(),
        (0..fm.len())
            .map(|i| {
                fm.row(i)
                    .iter()
                    .map(|v| v + 0.5 * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect(),
    )?;

    let (split, train_pairs) = subsample_split(fm.doc_ids(), &corpus.pairs, 0.6, 2)?;
    let train: Vec<String> = split.train_ids.iter().cloned().collect();
    let test: Vec<String> = split.test_ids.iter().cloned().collect();
    let cfg = StackConfig {
        level0: vec![
            Level0Spec {
                name: "gppl_clean".into(),
                model: Level0Kind::Gppl(GpplConfig::default()),
            },
            Level0Spec {
                name: "directranker_noisy".into(),
                model: Level0Kind::DirectRanker(RankerConfig {
                    hidden_dims: vec![32, 16, 7],
                    max_epochs: 30,
                    ..RankerConfig::default()
                }),
            },
        ],
        seed: 2,
        ..StackConfig::default()
    };
    let bws = compute_bws(&train, &train_pairs)?;
    let stack = fit_stack(&[fm, &noisy], &train_pairs, &bws, &cfg)?;
    for (k, fold) in stack.folds.iter().enumerate() {
        println!("fold {k}: standardized weights {:?}", fold.meta.weights);
    }
    let pred = predict_stacked(&stack, &[&fm.subset(&test)?, &noisy.subset(&test)?])?;
    println!(
        "stacked held-out rho: {:.3}",
        spearman(&pred, &corpus.truth.restrict(&test)?)?
    );
    Ok(())
}
