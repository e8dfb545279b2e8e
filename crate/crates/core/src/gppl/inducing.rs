//! Inducing input placement: k-means++ seeding followed by Lloyd refinement.

use nalgebra::DMatrix;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LLOYD_ITERS: usize = 10;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Up to `k` cluster centres of the rows of `x`. Fewer are returned when `x`
/// has fewer than `k` distinct rows.
pub fn kmeans_pp(x: &DMatrix<f64>, k: usize, seed: u64) -> DMatrix<f64> {
    let n = x.nrows();
    let dim = x.ncols();
    let rows: Vec<Vec<f64>> = super::kernel::rows(x);
    if n == 0 || k == 0 {
        return DMatrix::zeros(0, dim);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres: Vec<Vec<f64>> = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centres[0])).collect();
    while centres.len() < k {
        let Ok(dist) = WeightedIndex::new(&d2) else {
            break; // every remaining row coincides with a centre
        };
        let next = rows[dist.sample(&mut rng)].clone();
        for (d, r) in d2.iter_mut().zip(&rows) {
            *d = d.min(sq_dist(r, &next));
        }
        centres.push(next);
    }

    let k = centres.len();
    let mut assign = vec![usize::MAX; n];
    for _ in 0..LLOYD_ITERS {
        let mut changed = false;
        for (i, r) in rows.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(r, &centres[a]).total_cmp(&sq_dist(r, &centres[b])))
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, r) in rows.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..k {
            // empty clusters keep their previous centre
            if counts[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    DMatrix::from_fn(k, dim, |i, j| centres[i][j])
}
