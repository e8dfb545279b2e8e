//! Fits GPPL on the training part of a split and scores held-out documents.

use prefrank::corpus::subsample_split;
use prefrank::eval::spearman;
use prefrank::gppl::{self, GpplConfig};
use prefrank::synth::{generate, SynthConfig, UtilityFn};

fn main() -> prefrank::Result<()> {
    let corpus = generate(&SynthConfig {
        utility_fn: UtilityFn::GpSample,
        seed: 0,
        ..SynthConfig::default()
    })?;
    let (split, train_pairs) = subsample_split(corpus.features.doc_ids(), &corpus.pairs, 0.6, 0)?;
    let test: Vec<String> = split.test_ids.iter().cloned().collect();

    let posterior = gppl::fit(&corpus.features, &train_pairs, &GpplConfig::default())?;
    let pred = gppl::predict(&posterior, &corpus.features.subset(&test)?)?;

    println!(
        "trained on {} pairs with {} inducing points",
        train_pairs.len(),
        posterior.n_inducing()
    );
    for id in test.iter().take(5) {
        let (mean, var) = pred.get(id).unwrap();
        println!("{id}\tutility {mean:+.3} ± {:.3}", var.sqrt());
    }
    println!(
        "held-out rho against true utility: {:.3}",
        spearman(&pred.to_scores(), &corpus.truth.restrict(&test)?)?
    );
    Ok(())
}
