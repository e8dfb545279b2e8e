//! Generates a synthetic corpus and writes it to a directory.
//!
//! `cargo run --example synth_corpus -- /tmp/corpus`

use prefrank::bws::compute_bws;
use prefrank::corpus::pair_ids;
use prefrank::eval::spearman;
use prefrank::synth::{generate, SynthConfig, UtilityFn};

fn main() -> prefrank::Result<()> {
    let cfg = SynthConfig {
        n_docs: 100,
        dim: 2,
        utility_fn: UtilityFn::GpSample,
        pairs_total: 500,
        seed: 7,
        ..SynthConfig::default()
    };
    let corpus = generate(&cfg)?;
    let bws = compute_bws(&pair_ids(&corpus.pairs), &corpus.pairs)?;
    println!(
        "{} documents, {} distinct pairs, BWS vs true utility rho = {:.3}",
        corpus.features.len(),
        corpus.pairs.len(),
        spearman(&bws, &corpus.truth.restrict(bws.ids())?)?
    );
    if let Some(dir) = std::env::args().nth(1) {
        std::fs::create_dir_all(&dir).map_err(|e| prefrank::Error::Invalid(e.to_string()))?;
        corpus.save(&dir)?;
        println!("wrote features.tsv, pairs.tsv and truth.tsv to {dir}");
    }
    Ok(())
}
