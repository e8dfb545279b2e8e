//! Trains DirectRanker on BWS scores with early stopping on a validation set.

use prefrank::bws::compute_bws;
use prefrank::corpus::subsample_split;
use prefrank::directranker::{self, RankerConfig};
use prefrank::eval::spearman;
use prefrank::synth::{generate, SynthConfig, UtilityFn};

fn main() -> prefrank::Result<()> {
    let corpus = generate(&SynthConfig {
        n_docs: 200,
        dim: 5,
        utility_fn: UtilityFn::Linear,
        pairs_total: 2000,
        seed: 5,
        ..SynthConfig::default()
    })?;
    let (split, train_pairs) = subsample_split(corpus.features.doc_ids(), &corpus.pairs, 0.6, 5)?;
    let train: Vec<String> = split.train_ids.iter().cloned().collect();
    let test: Vec<String> = split.test_ids.iter().cloned().collect();

    // hold out a quarter of the training documents for early stopping
    let (fit_ids, val_ids) = train.split_at(train.len() * 3 / 4);
    let fit_pairs: Vec<_> = train_pairs
        .iter()
        .filter(|p| fit_ids.contains(&p.winner) && fit_ids.contains(&p.loser))
        .cloned()
        .collect();
    let fit_bws = compute_bws(fit_ids, &fit_pairs)?;
    let val_gold = compute_bws(&train, &train_pairs)?.restrict(val_ids)?;
    let val_features = corpus.features.subset(val_ids)?;

    let cfg = RankerConfig {
        hidden_dims: vec![64, 32, 7],
        max_epochs: 40,
        seed: 5,
        ..RankerConfig::default()
    };
    let model = directranker::train(
        &corpus.features,
        &fit_bws,
        &cfg,
        Some((&val_features, &val_gold)),
    )?;
    let pred = model.predict_scores(&corpus.features.subset(&test)?)?;
    println!(
        "stopped after {} epochs, best validation rho {:.3}",
        model.epochs_trained(),
        model.best_val_spearman().unwrap_or(f64::NAN)
    );
    println!(
        "held-out rho against true utility: {:.3}",
        spearman(&pred, &corpus.truth.restrict(&test)?)?
    );
    Ok(())
}
