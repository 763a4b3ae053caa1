use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steps_core::dataset::{Attribute, CategoricalDataset, Schema};
use steps_core::mock::uniform_mock;
use steps_core::specks::*;

/// `sup |F_a − F_b|` by evaluating both ECDFs at every distinct value.
fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |v: &[f64], x: f64| v.iter().filter(|&&y| y <= x).count() as f64 / v.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
        .fold(0.0, f64::max)
}

fn schema(cards: &[usize]) -> Arc<Schema> {
    Arc::new(
        Schema::new(
            cards
                .iter()
                .enumerate()
                .map(|(j, &k)| Attribute::new(format!("x{j}"), (0..k).map(|l| format!("v{l}"))))
                .collect(),
        )
        .unwrap(),
    )
}

fn draw(schema: &Arc<Schema>, n: usize, tilt: f64, rng: &mut ChaCha8Rng) -> CategoricalDataset {
    let records = (0..n)
        .map(|_| {
            schema
                .cardinalities()
                .iter()
                .map(|&k| {
                    let w: Vec<f64> = (0..k).map(|l| (tilt * l as f64).exp()).collect();
                    let mut t = rng.random::<f64>() * w.iter().sum::<f64>();
                    let mut level = k - 1;
                    for (i, x) in w.iter().enumerate() {
                        if t < *x {
                            level = i;
                            break;
                        }
                        t -= x;
                    }
                    level as u32
                })
                .collect()
        })
        .collect();
    CategoricalDataset::new(schema.clone(), records).unwrap()
}

#[test]
fn exact_ks_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let na = rng.random_range(1..=1000);
        let nb = rng.random_range(1..=1000);
        // coarse grid forces ties within and across the vectors
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(0..50) as f64 / 50.0).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0..60) as f64 / 60.0).collect();
        assert!((ks_distance(&a, &b) - brute_ks(&a, &b)).abs() < 1e-12);
    }
    assert!((ks_distance(&[0.1, 0.4, 0.8], &[0.2, 0.5, 0.9]) - 1.0 / 3.0).abs() < 1e-15);
}

/// Penalized log-likelihood on an explicit dense design, one row per record.
fn dense_objective(x: &[Vec<f64>], y: &[f64], beta: &[f64], ridge: f64) -> (f64, Vec<f64>) {
    let mut ll = 0.0;
    let mut grad = vec![0.0; beta.len()];
    for (row, &t) in x.iter().zip(y) {
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let p = 1.0 / (1.0 + (-eta).exp());
        ll += t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        for (g, a) in grad.iter_mut().zip(row) {
            *g += (t - p) * a;
        }
    }
    for c in 1..beta.len() {
        ll -= 0.5 * ridge * beta[c] * beta[c];
        grad[c] -= ridge * beta[c];
    }
    (ll, grad)
}

/// BFGS ascent with Armijo backtracking.
fn bfgs_maximize(x: &[Vec<f64>], y: &[f64], ridge: f64) -> Vec<f64> {
    let k = x[0].len();
    let mut beta = vec![0.0; k];
    let mut hinv = vec![vec![0.0; k]; k];
    for (i, row) in hinv.iter_mut().enumerate() {
        row[i] = 1.0 / x.len() as f64;
    }
    let (mut f, mut g) = dense_objective(x, y, &beta, ridge);
    for _ in 0..2000 {
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-11 {
            break;
        }
        let dir: Vec<f64> = (0..k).map(|i| (0..k).map(|j| hinv[i][j] * g[j]).sum()).collect();
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let (nb, nf, ng) = loop {
            let cand: Vec<f64> = beta.iter().zip(&dir).map(|(b, d)| b + t * d).collect();
            let (cf, cg) = dense_objective(x, y, &cand, ridge);
            if cf >= f + 1e-4 * t * slope || t < 1e-12 {
                break (cand, cf, cg);
            }
            t *= 0.5;
        };
        let s: Vec<f64> = nb.iter().zip(&beta).map(|(a, b)| a - b).collect();
        // ascent on f is descent on −f: use q = −(g_new − g_old)
        let q: Vec<f64> = g.iter().zip(&ng).map(|(a, b)| a - b).collect();
        let sq: f64 = s.iter().zip(&q).map(|(a, b)| a * b).sum();
        if sq > 1e-18 {
            let hq: Vec<f64> = (0..k).map(|i| (0..k).map(|j| hinv[i][j] * q[j]).sum()).collect();
            let qhq: f64 = q.iter().zip(&hq).map(|(a, b)| a * b).sum();
            for i in 0..k {
                for j in 0..k {
                    hinv[i][j] += (sq + qhq) * s[i] * s[j] / (sq * sq) - (hq[i] * s[j] + s[i] * hq[j]) / sq;
                }
            }
        }
        beta = nb;
        f = nf;
        g = ng;
    }
    beta
}

#[test]
fn newton_fit_matches_independent_optimizer() {
    let schema = schema(&[2, 3, 2, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let orig = draw(&schema, 100, 0.0, &mut rng);
    let syn = draw(&schema, 100, 0.4, &mut rng);
    let fit = fit_propensity(&orig, &syn, &PropensityOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.dropped.is_empty());

    // dense reference-coded design, intercept first, same column order
    let one_hot = |r: &[u32]| {
        let mut row = vec![1.0];
        for (j, &v) in r.iter().enumerate() {
            for l in 1..schema.cardinality(j) as u32 {
                row.push(if v == l { 1.0 } else { 0.0 });
            }
        }
        row
    };
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in orig.records() {
        x.push(one_hot(r));
        y.push(1.0);
    }
    for r in syn.records() {
        x.push(one_hot(r));
        y.push(0.0);
    }
    let oracle = bfgs_maximize(&x, &y, 1e-6);
    assert_eq!(oracle.len(), fit.coefficients.len());
    for (a, b) in fit.coefficients.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
}

#[test]
fn copies_are_indistinguishable() {
    let schema = schema(&[2, 3, 2, 4, 5]);
    let data = uniform_mock(schema, 10_000, 3);
    let r = specks(&data, &vec![data.clone(); 3], &PropensityOptions::default()).unwrap();
    assert!(r.mean_ks < 0.05);
    let fit = fit_propensity(&data, &data, &PropensityOptions::default()).unwrap();
    assert!(fit.coefficients.iter().all(|b| b.abs() < 1e-3));
}

#[test]
fn resampled_ks_shrinks_with_n() {
    let schema = schema(&[2, 3, 2, 4]);
    let mut means = Vec::new();
    for (k, n) in [100usize, 1000, 10_000].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + k as u64);
        let orig = draw(&schema, n, 0.3, &mut rng);
        let reps: Vec<CategoricalDataset> = (0..5).map(|_| draw(&schema, n, 0.3, &mut rng)).collect();
        means.push(specks(&orig, &reps, &PropensityOptions::default()).unwrap().mean_ks);
    }
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
}

#[test]
fn scrambled_replicate_separates_from_skewed_original() {
    // original concentrated on four cells of a 64-cell table; the Bayes
    // classifier scores every other cell 0, so its KS is one minus the
    // scrambled share landing on the hot cells
    let schema = schema(&[2; 6]);
    let hot = [[0u32, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0], [0, 0, 1, 0, 0, 0]];
    let n = 4000;
    let records = (0..n).map(|i| hot[i % 4].to_vec()).collect();
    let orig = CategoricalDataset::new(schema.clone(), records).unwrap();
    let scrambled = uniform_mock(schema.clone(), n, 9);
    let hot_share = scrambled
        .records()
        .filter(|r| hot.iter().any(|h| h.as_slice() == *r))
        .count() as f64
        / n as f64;
    let bayes = 1.0 - hot_share;
    assert!(bayes > 0.9);
    let r = specks(&orig, &[scrambled], &PropensityOptions::default()).unwrap();
    assert!(r.mean_ks > 0.5, "{}", r.mean_ks);
    assert!(r.mean_ks <= bayes + 1e-12);
}

#[test]
fn record_order_does_not_matter() {
    let schema = schema(&[3, 2, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let orig = draw(&schema, 500, 0.0, &mut rng);
    let syn = draw(&schema, 500, 0.5, &mut rng);
    let base = specks(&orig, &[syn.clone()], &PropensityOptions::default()).unwrap();
    let shuffle = |d: &CategoricalDataset, rng: &mut ChaCha8Rng| {
        let mut recs: Vec<Vec<u32>> = d.records().map(|r| r.to_vec()).collect();
        recs.shuffle(rng);
        CategoricalDataset::new(d.schema().clone(), recs).unwrap()
    };
    let again = specks(&shuffle(&orig, &mut rng), &[shuffle(&syn, &mut rng)], &PropensityOptions::default()).unwrap();
    assert_eq!(base.per_replicate_ks[0].to_bits(), again.per_replicate_ks[0].to_bits());
}

proptest! {
    #[test]
    fn ks_is_bounded_and_symmetric(
        a in prop::collection::vec(0.0f64..1.0, 1..200),
        b in prop::collection::vec(0.0f64..1.0, 1..200),
    ) {
        let d = ks_distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_distance(&b, &a));
        prop_assert!((d - brute_ks(&a, &b)).abs() < 1e-12);
    }
}
