//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs with `cargo test --test acceptance`.

use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use prefrank::bws::compute_bws;
use prefrank::corpus::{save_features_text, subsample_split, FeatureMatrix, PairLabel};
use prefrank::directranker::{self, PairBatch, RankerConfig, RankerModel};
use prefrank::eval::spearman;
use prefrank::experiment::{run_experiment, ExperimentConfig, ModelSpec, StackInput};
use prefrank::gppl::{self, fit_exact_reference, GpplConfig, VariationalObjective};
use prefrank::stacking::{
    fit_stack, predict_stacked, train_level0, Level0Kind, Level0Spec, StackConfig,
};
use prefrank::synth::{generate, SynthConfig, UtilityFn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = fn() -> (bool, String);

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn ids_of(set: &std::collections::BTreeSet<String>) -> Vec<String> {
    set.iter().cloned().collect()
}

// ---------------------------------------------------------------- quasiorder

fn quasiorder() -> (bool, String) {
    let cfg = RankerConfig {
        hidden_dims: vec![64, 32, 7],
        seed: 11,
        ..RankerConfig::default()
    };
    let dim = 16;
    let model = RankerModel::init(dim, None, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut x = || -> Vec<f64> { (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect() };
    let o = |a: &[f64], b: &[f64]| model.forward_pair(a, b, None, None).unwrap();

    let mut reflexive_max = 0.0f64;
    let mut antisym_max = 0.0f64;
    let mut violations = 0;
    for _ in 0..1000 {
        let a = x();
        reflexive_max = reflexive_max.max(o(&a, &a).abs());
    }
    for _ in 0..1000 {
        let (a, b) = (x(), x());
        antisym_max = antisym_max.max((o(&a, &b) + o(&b, &a)).abs());
    }
    for _ in 0..1000 {
        let (a, b, c) = (x(), x(), x());
        let (ab, bc, ac) = (o(&a, &b), o(&b, &c), o(&a, &c));
        if ab > 0.0 && bc > 0.0 && ac <= 0.0 {
            violations += 1;
        }
        if ab < 0.0 && bc < 0.0 && ac >= 0.0 {
            violations += 1;
        }
    }
    (
        reflexive_max == 0.0 && antisym_max <= 1e-12 && violations == 0,
        format!(
            "max |o(x,x)| = {reflexive_max:e}, max |o(a,b)+o(b,a)| = {antisym_max:e}, transitivity violations = {violations}"
        ),
    )
}

// ---------------------------------------------------------- gradient checks

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn ranker_gradient_error() -> f64 {
    let cfg = RankerConfig {
        hidden_dims: vec![4, 3],
        batch_norm: false,
        dropout: 0.0,
        seed: 21,
        ..RankerConfig::default()
    };
    let dim = 5;
    let model = RankerModel::init(dim, None, &cfg).unwrap();
    // ten documents, eight pairs among them
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let docs: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let pairs = [
        (0, 1),
        (2, 3),
        (4, 5),
        (6, 7),
        (8, 9),
        (1, 4),
        (3, 8),
        (9, 0),
    ];
    let col = |k: usize| {
        DMatrix::from_fn(dim, pairs.len(), |r, c| {
            let p = pairs[c];
            docs[if k == 0 { p.0 } else { p.1 }][r]
        })
    };
    let batch = PairBatch {
        x1: col(0),
        x2: col(1),
        focus1: None,
        focus2: None,
        labels: (0..pairs.len())
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect(),
    };
    let (_, grads) = model.loss_gradient(&batch, 0).unwrap();
    let params = model.parameters();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for t in 0..params.len() {
        for k in 0..params[t].len() {
            let mut plus = params.clone();
            plus[t][k] += h;
            let mut minus = params.clone();
            minus[t][k] -= h;
            let mut mp = model.clone();
            mp.set_parameters(&plus).unwrap();
            let mut mm = model.clone();
            mm.set_parameters(&minus).unwrap();
            let fd = (mp.loss_gradient(&batch, 0).unwrap().0
                - mm.loss_gradient(&batch, 0).unwrap().0)
                / (2.0 * h);
            worst = worst.max(rel_err(grads[t][k], fd));
        }
    }
    worst
}

fn gppl_gradient_error() -> f64 {
    let synth = generate(&SynthConfig {
        n_docs: 10,
        pairs_total: 25,
        utility_fn: UtilityFn::GpSample,
        seed: 31,
        ..SynthConfig::default()
    })
    .unwrap();
    let obj =
        VariationalObjective::new(&synth.features, &synth.pairs, &GpplConfig::default()).unwrap();
    let m_dim = obj.n_inducing();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mean = DVector::from_fn(m_dim, |_, _| rng.random_range(-1.0..1.0));
    let a = DMatrix::from_fn(m_dim, m_dim, |_, _| rng.random_range(-0.3..0.3));
    let cov = &a * a.transpose() + 0.2 * obj.prior_cov();

    let gm = obj.bound_grad_mean(&mean, &cov);
    let gs = obj.bound_grad_cov(&mean, &cov).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..m_dim {
        let mut p = mean.clone();
        p[i] += h;
        let mut q = mean.clone();
        q[i] -= h;
        let fd = (obj.bound(&p, &cov).unwrap() - obj.bound(&q, &cov).unwrap()) / (2.0 * h);
        worst = worst.max(rel_err(gm[i], fd));
    }
    for i in 0..m_dim {
        for j in 0..=i {
            // symmetric perturbation keeps S a covariance
            let mut e = DMatrix::zeros(m_dim, m_dim);
            e[(i, j)] = h;
            e[(j, i)] = h;
            let fd = (obj.bound(&mean, &(&cov + &e)).unwrap()
                - obj.bound(&mean, &(&cov - &e)).unwrap())
                / (2.0 * h);
            let analytic = if i == j {
                gs[(i, i)]
            } else {
                gs[(i, j)] + gs[(j, i)]
            };
            worst = worst.max(rel_err(analytic, fd));
        }
    }
    worst
}

fn gradient_checks() -> (bool, String) {
    let dr = ranker_gradient_error();
    let gp = gppl_gradient_error();
    (
        dr < 1e-4 && gp < 1e-4,
        format!("max relative error: directranker {dr:.2e}, gppl bound {gp:.2e} (limit 1e-4)"),
    )
}

// --------------------------------------------------------------- BWS oracle

fn bws_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=20);
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let n_pairs = rng.random_range(1..60);
        let mut pairs = Vec::new();
        for _ in 0..n_pairs {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            pairs.push(PairLabel::new(
                ids[a].clone(),
                ids[b].clone(),
                rng.random_range(1..4),
            ));
        }
        // tally every individual vote
        let mut wins: HashMap<&str, u64> = HashMap::new();
        let mut losses: HashMap<&str, u64> = HashMap::new();
        for p in &pairs {
            for _ in 0..p.count {
                *wins.entry(&p.winner).or_default() += 1;
                *losses.entry(&p.loser).or_default() += 1;
            }
        }
        let got = compute_bws(&ids, &pairs).unwrap();
        for id in &ids {
            let w = *wins.get(id.as_str()).unwrap_or(&0) as f64;
            let l = *losses.get(id.as_str()).unwrap_or(&0) as f64;
            let want = if w + l == 0.0 { 0.0 } else { (w - l) / (w + l) };
            worst = worst.max((got.get(id).unwrap() - want).abs());
        }
    }
    (
        worst < 1e-12,
        format!("max |error| over 100 instances = {worst:e}"),
    )
}

// ------------------------------------------------------------ GPPL recovery

fn gppl_recovery() -> (bool, String) {
    let mut rhos = Vec::new();
    for seed in 0..10 {
        let c = generate(&SynthConfig {
            n_docs: 100,
            dim: 2,
            utility_fn: UtilityFn::GpSample,
            pairs_total: 500,
            sigma2: 1.0,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let (split, train_pairs) =
            subsample_split(c.features.doc_ids(), &c.pairs, 0.6, seed).unwrap();
        let test = ids_of(&split.test_ids);
        let post = gppl::fit(
            &c.features,
            &train_pairs,
            &GpplConfig {
                seed,
                ..GpplConfig::default()
            },
        )
        .unwrap();
        let pred = gppl::predict(&post, &c.features.subset(&test).unwrap())
            .unwrap()
            .to_scores();
        rhos.push(spearman(&pred, &c.truth.restrict(&test).unwrap()).unwrap());
    }
    let med = median(rhos.clone());
    (
        med >= 0.80,
        format!(
            "median held-out rho = {med:.3} (>= 0.80); per seed {}",
            fmt_list(&rhos)
        ),
    )
}

// ----------------------------------------------------- sparse vs exact GPPL

fn sparse_vs_exact() -> (bool, String) {
    let mut rhos = Vec::new();
    for seed in 0..10 {
        let c = generate(&SynthConfig {
            n_docs: 30,
            pairs_total: 100,
            utility_fn: UtilityFn::GpSample,
            seed: 100 + seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let cfg = GpplConfig {
            n_inducing: 20,
            seed,
            ..GpplConfig::default()
        };
        let sparse = gppl::predict(
            &gppl::fit(&c.features, &c.pairs, &cfg).unwrap(),
            &c.features,
        )
        .unwrap()
        .to_scores();
        let exact = fit_exact_reference(&c.features, &c.pairs, &cfg)
            .unwrap()
            .to_scores();
        rhos.push(spearman(&sparse, &exact).unwrap());
    }
    let med = median(rhos.clone());
    (
        med >= 0.95,
        format!(
            "median rank agreement = {med:.4} (>= 0.95); min {:.4}",
            rhos.iter().cloned().fold(1.0, f64::min)
        ),
    )
}

// ---------------------------------------------------- DirectRanker recovery

fn recovery_ranker_config(seed: u64) -> RankerConfig {
    RankerConfig {
        hidden_dims: vec![64, 32, 7],
        max_epochs: 30,
        seed,
        ..RankerConfig::default()
    }
}

fn directranker_recovery() -> (bool, String) {
    let mut rhos = Vec::new();
    for seed in 0..5 {
        let c = generate(&SynthConfig {
            n_docs: 200,
            dim: 5,
            utility_fn: UtilityFn::Linear,
            pairs_total: 2000,
            sigma2: 1e-9,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let (split, train_pairs) =
            subsample_split(c.features.doc_ids(), &c.pairs, 0.6, seed).unwrap();
        let train_ids = ids_of(&split.train_ids);
        let test = ids_of(&split.test_ids);
        let bws = compute_bws(&train_ids, &train_pairs).unwrap();
        let model =
            directranker::train(&c.features, &bws, &recovery_ranker_config(seed), None).unwrap();
        let pred = model
            .predict_scores(&c.features.subset(&test).unwrap())
            .unwrap();
        rhos.push(spearman(&pred, &c.truth.restrict(&test).unwrap()).unwrap());
    }
    let med = median(rhos.clone());
    (
        med >= 0.95,
        format!(
            "median held-out rho = {med:.3} (>= 0.95); per seed {}",
            fmt_list(&rhos)
        ),
    )
}

// --------------------------------------------------------- stacking benefit

fn noisy_copy(fm: &FeatureMatrix, sd: f64, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMatrix::new(
        fm.doc_ids().to_vec(),
        (0..fm.len())
            .map(|i| {
                fm.row(i)
                    .iter()
                    .map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect(),
    )
    .unwrap()
}

fn stacking_benefit() -> (bool, String) {
    let mut gaps = Vec::new();
    let mut weight_wins = 0;
    for seed in 0..10u64 {
        let c = generate(&SynthConfig {
            utility_fn: UtilityFn::GpSample,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let noisy = noisy_copy(&c.features, 0.5, seed + 1000);
        let (split, train_pairs) =
            subsample_split(c.features.doc_ids(), &c.pairs, 0.6, seed).unwrap();
        let train_ids = ids_of(&split.train_ids);
        let test = ids_of(&split.test_ids);
        let truth = c.truth.restrict(&test).unwrap();
        let signal = Level0Kind::Gppl(GpplConfig {
            seed,
            ..GpplConfig::default()
        });
        let handicapped = Level0Kind::DirectRanker(RankerConfig {
            hidden_dims: vec![32, 16, 7],
            max_epochs: 30,
            seed,
            ..RankerConfig::default()
        });
        let (clean_test, noisy_test) = (
            c.features.subset(&test).unwrap(),
            noisy.subset(&test).unwrap(),
        );

        let level0_rho = |kind: &Level0Kind, fm: &FeatureMatrix, test_fm: &FeatureMatrix| {
            let m = train_level0(kind, fm, &train_ids, &train_pairs, None).unwrap();
            spearman(&m.predict(test_fm).unwrap(), &truth).unwrap()
        };
        let r_signal = level0_rho(&signal, &c.features, &clean_test);
        let r_noise = level0_rho(&handicapped, &noisy, &noisy_test);

        let cfg = StackConfig {
            level0: vec![
                Level0Spec {
                    name: "signal".into(),
                    model: signal.clone(),
                },
                Level0Spec {
                    name: "noise".into(),
                    model: handicapped.clone(),
                },
            ],
            seed,
            ..StackConfig::default()
        };
        let bws_train = compute_bws(&train_ids, &train_pairs).unwrap();
        let stack = fit_stack(&[&c.features, &noisy], &train_pairs, &bws_train, &cfg).unwrap();
        let r_stack = spearman(
            &predict_stacked(&stack, &[&clean_test, &noisy_test]).unwrap(),
            &truth,
        )
        .unwrap();
        gaps.push(r_stack - r_signal.max(r_noise));

        let w_signal: f64 = stack.folds.iter().map(|f| f.meta.weights[0].abs()).sum();
        let w_noise: f64 = stack.folds.iter().map(|f| f.meta.weights[1].abs()).sum();
        if w_noise < w_signal {
            weight_wins += 1;
        }
    }
    let med = median(gaps.clone());
    (
        med >= -0.05 && weight_wins >= 7,
        format!(
            "median rho_stack - max(level-0 rho) = {med:.3} (>= -0.05); noise weight below signal weight in {weight_wins}/10 seeds (>= 7)"
        ),
    )
}

// --------------------------------------------------------- sparsity curve

fn write_corpus(dir: &Path, seed: u64) -> prefrank::synth::SynthCorpus {
    let c = generate(&SynthConfig {
        n_docs: 200,
        dim: 2,
        utility_fn: UtilityFn::GpSample,
        pairs_total: 2000,
        sigma2: 1.0,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    c.save(dir).unwrap();
    save_features_text(
        &noisy_copy(&c.features, 0.5, seed + 7),
        dir.join("features_noisy.tsv"),
    )
    .unwrap();
    c
}

fn small_ranker(seed: u64) -> RankerConfig {
    RankerConfig {
        hidden_dims: vec![32, 16, 7],
        max_epochs: 30,
        seed,
        ..RankerConfig::default()
    }
}

fn sparsity_curve() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), 51);
    let gppl_cfg = GpplConfig::default();
    let cfg = ExperimentConfig {
        seed: 52,
        out_dir: dir.path().join("out"),
        fractions: vec![0.6, 0.33, 0.2, 0.1],
        n_repeats: 3,
        pairs: dir.path().join("pairs.tsv"),
        pair_format: prefrank::corpus::PairFormat::Pairs,
        documents: None,
        features: [
            ("clean".to_string(), dir.path().join("features.tsv")),
            ("noisy".to_string(), dir.path().join("features_noisy.tsv")),
        ]
        .into_iter()
        .collect(),
        models: vec![
            ModelSpec::Individual {
                name: "gppl".into(),
                features: "clean".into(),
                model: Level0Kind::Gppl(gppl_cfg.clone()),
            },
            ModelSpec::Individual {
                name: "directranker".into(),
                features: "clean".into(),
                model: Level0Kind::DirectRanker(small_ranker(0)),
            },
            ModelSpec::Ensemble {
                name: "directranker_ensemble".into(),
                features: "clean".into(),
                model: Level0Kind::DirectRanker(small_ranker(0)),
                n_folds: 4,
                early_stopping: true,
            },
            ModelSpec::Stack {
                name: "stack".into(),
                level0: vec![
                    StackInput {
                        name: "gppl".into(),
                        features: "clean".into(),
                        model: Level0Kind::Gppl(gppl_cfg),
                    },
                    StackInput {
                        name: "directranker".into(),
                        features: "noisy".into(),
                        model: Level0Kind::DirectRanker(small_ranker(0)),
                    },
                ],
                n_folds: 4,
                rank_mean: false,
                early_stopping: true,
            },
        ],
    };
    let table = match run_experiment(&cfg) {
        Ok(t) => t,
        Err(e) => return (false, format!("experiment failed: {e}")),
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for spec in &cfg.models {
        let rows: Vec<_> = cfg
            .fractions
            .iter()
            .map(|f| table.get(spec.name(), *f).unwrap())
            .collect();
        for w in rows.windows(2) {
            let allowed = w[0].std.max(w[1].std);
            if w[1].mean - w[0].mean > allowed {
                ok = false;
            }
        }
        let means: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.3}±{:.3}", r.mean, r.std))
            .collect();
        parts.push(format!("{} {}", spec.name(), means.join(" -> ")));
    }
    (
        ok,
        format!(
            "mean rho at fractions 0.6/0.33/0.2/0.1: {}",
            parts.join("; ")
        ),
    )
}

// ------------------------------------------------ full-scale pipeline check

fn table1_pipeline() -> (bool, String) {
    let humour = std::env::var_os("PREFRANK_HUMOUR_EXPERIMENT");
    let metaphor = std::env::var_os("PREFRANK_METAPHOR_EXPERIMENT");
    if humour.is_none() && metaphor.is_none() {
        // Without the crowdsourced corpora, check that the configuration
        // shape used for them (two representations, stack + focus-word
        // ensemble) runs end to end on a stand-in corpus.
        return match stand_in_pipeline() {
            Ok(msg) => (
                true,
                format!(
                    "datasets absent, full-scale bands not evaluated; stand-in pipeline ran: {msg}"
                ),
            ),
            Err(e) => (false, format!("stand-in pipeline failed: {e}")),
        };
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (var, model, fraction, target) in [
        (humour, "stacking", 0.6, 0.61),
        (metaphor, "directranker_ensemble_focus", 0.1, 0.57),
    ] {
        let Some(path) = var else { continue };
        let result =
            prefrank::experiment::load_experiment_config(&path).and_then(|c| run_experiment(&c));
        match result {
            Ok(t) => match t.get(model, fraction) {
                Some(r) => {
                    let pass = (r.mean - target).abs() <= 0.05;
                    ok &= pass;
                    parts.push(format!(
                        "{model}@{fraction} rho {:.3} (target {target} ± 0.05)",
                        r.mean
                    ));
                }
                None => {
                    ok = false;
                    parts.push(format!("{model}@{fraction} missing from summary"));
                }
            },
            Err(e) => {
                ok = false;
                parts.push(format!("{}: {e}", Path::new(&path).display()));
            }
        }
    }
    (ok, parts.join("; "))
}

fn stand_in_pipeline() -> prefrank::Result<String> {
    let dir = tempfile::tempdir().map_err(|e| prefrank::Error::Invalid(e.to_string()))?;
    let c = write_corpus(dir.path(), 61);
    // focus vectors: a noisy view of the first feature
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let rows: Vec<Vec<f64>> = (0..c.features.len())
        .map(|i| c.features.row(i).to_vec())
        .collect();
    let focus: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r[0] + 0.3 * rng.sample::<f64, _>(StandardNormal)])
        .collect();
    let with_focus = FeatureMatrix::new(c.features.doc_ids().to_vec(), rows)?.with_focus(focus)?;
    save_features_text(&with_focus, dir.path().join("features_focus.tsv"))?;
    let ranker = RankerConfig {
        focus_hidden_dims: Some(vec![4]),
        ..small_ranker(0)
    };
    let cfg = ExperimentConfig {
        seed: 63,
        out_dir: dir.path().join("out"),
        fractions: vec![0.6, 0.1],
        n_repeats: 1,
        pairs: dir.path().join("pairs.tsv"),
        pair_format: prefrank::corpus::PairFormat::Pairs,
        documents: None,
        features: [
            ("se".to_string(), dir.path().join("features.tsv")),
            ("mwe".to_string(), dir.path().join("features_noisy.tsv")),
            ("focus".to_string(), dir.path().join("features_focus.tsv")),
        ]
        .into_iter()
        .collect(),
        models: vec![
            ModelSpec::Stack {
                name: "stacking".into(),
                level0: vec![
                    StackInput {
                        name: "gppl_se".into(),
                        features: "se".into(),
                        model: Level0Kind::Gppl(GpplConfig::default()),
                    },
                    StackInput {
                        name: "directranker_mwe".into(),
                        features: "mwe".into(),
                        model: Level0Kind::DirectRanker(small_ranker(0)),
                    },
                ],
                n_folds: 4,
                rank_mean: false,
                early_stopping: true,
            },
            ModelSpec::Ensemble {
                name: "directranker_ensemble_focus".into(),
                features: "focus".into(),
                model: Level0Kind::DirectRanker(ranker),
                n_folds: 4,
                early_stopping: true,
            },
        ],
    };
    let t = run_experiment(&cfg)?;
    let s = t.get("stacking", 0.6).map_or(f64::NAN, |r| r.mean);
    let e = t
        .get("directranker_ensemble_focus", 0.1)
        .map_or(f64::NAN, |r| r.mean);
    Ok(format!(
        "stacking@0.6 rho {s:.3}, focus ensemble@0.1 rho {e:.3}"
    ))
}

fn main() {
    let checks: [(&str, Check, Option<Duration>); 9] = [
        ("quasiorder", quasiorder, Some(Duration::from_secs(5))),
        (
            "gradient-checks",
            gradient_checks,
            Some(Duration::from_secs(30)),
        ),
        ("bws-oracle", bws_oracle, None),
        (
            "gppl-recovery",
            gppl_recovery,
            Some(Duration::from_secs(120)),
        ),
        ("sparse-vs-exact", sparse_vs_exact, None),
        (
            "directranker-recovery",
            directranker_recovery,
            Some(Duration::from_secs(120)),
        ),
        ("stacking-benefit", stacking_benefit, None),
        ("sparsity-curve", sparsity_curve, None),
        ("full-scale-pipeline", table1_pipeline, None),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check, limit) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = check();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let limit_note = limit.map_or(String::new(), |l| format!(", limit {}s", l.as_secs()));
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {name}: {detail} ({:.1}s{limit_note})",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
