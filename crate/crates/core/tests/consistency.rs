use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steps_core::consistency::*;

/// Random tree with uniform leaf depth: every node keeps between one and
/// `b` explicit children, the rest are implicit phantoms.
fn random_tree(rng: &mut ChaCha8Rng, b: usize, height: usize, full: bool) -> Hierarchy {
    let mut h = Hierarchy::new(rng.random_range(-50.0..500.0));
    for _ in 0..height {
        let parents = h.depth(h.height());
        let mut items = Vec::new();
        for u in parents {
            let k = if full { b } else { rng.random_range(1..=b) };
            for _ in 0..k {
                items.push((u, rng.random_range(-20.0..100.0)));
            }
        }
        h.push_level(b, items).unwrap();
    }
    h
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn two_pass_matches_least_squares_on_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for i in 0..100 {
        let b = [2, 3, 14][i % 3];
        let height = 1 + (i / 3) % 3;
        let full = i % 2 == 0;
        let h = random_tree(&mut rng, b, height, full);
        for root in [RootMode::Observed, RootMode::Fixed(h.values()[0].abs() + 10.0)] {
            let fit = enforce(&h, root).unwrap();
            let oracle = ls_oracle(&h, root).unwrap();
            for (v, (x, y)) in fit.released.iter().zip(&oracle).enumerate() {
                assert!(close(*x, *y, 1e-9), "tree {i} node {v}: {x} vs {y}");
            }
            if full {
                assert!(max_constraint_residual(&h, &fit.released) <= 1e-9);
            }
            if let RootMode::Fixed(n) = root {
                assert_eq!(fit.released[0], n);
            }
        }
        checked += 1;
    }
    assert_eq!(checked, 100);
}

#[test]
fn mixed_branching_matches_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut h = Hierarchy::new(rng.random_range(0.0..100.0));
        for b in [3usize, 5, 2] {
            let parents = h.depth(h.height());
            let items: Vec<(usize, f64)> = parents
                .flat_map(|u| std::iter::repeat(u).take(b))
                .map(|u| (u, rng.random_range(-5.0..30.0)))
                .collect();
            h.push_level(b, items).unwrap();
        }
        let fit = enforce(&h, RootMode::Observed).unwrap();
        let oracle = ls_oracle(&h, RootMode::Observed).unwrap();
        for (x, y) in fit.released.iter().zip(&oracle) {
            assert!(close(*x, *y, 1e-9));
        }
    }
}

#[test]
fn released_counts_are_affine_in_observations() {
    // explicit matrix of the map on a complete b=3, L=2 tree (13 nodes)
    let nodes = 13;
    let base: Vec<f64> = (0..nodes).map(|i| (i * 7 % 11) as f64).collect();
    let apply = |v: &[f64]| enforce(&Hierarchy::complete(3, 2, v).unwrap(), RootMode::Observed).unwrap().released;
    let zero = apply(&vec![0.0; nodes]);
    let mut cols = Vec::new();
    for j in 0..nodes {
        let mut e = vec![0.0; nodes];
        e[j] = 1.0;
        let r = apply(&e);
        cols.push(r.iter().zip(&zero).map(|(a, b)| a - b).collect::<Vec<_>>());
    }
    let direct = apply(&base);
    for v in 0..nodes {
        let via_matrix: f64 = zero[v] + (0..nodes).map(|j| cols[j][v] * base[j]).sum::<f64>();
        assert!((via_matrix - direct[v]).abs() < 1e-9);
    }
}

#[test]
fn shifting_one_level_of_z_shifts_children_by_share() {
    let h = Hierarchy::complete(2, 2, &[12.0, 5.0, 6.0, 2.0, 3.0, 4.0, 1.0]).unwrap();
    let z = bottom_up(&h).unwrap();
    let base = top_down(&h, &z, RootMode::Observed);
    let delta = 0.75;
    let mut shifted = z.clone();
    shifted[0] += delta;
    let out = top_down(&h, &shifted, RootMode::Observed);
    // root residual grows by δ, spread as δ/b over each child, then δ/b² below
    assert!((out[1] - base[1] - delta / 2.0).abs() < 1e-12);
    for leaf in 3..7 {
        assert!((out[leaf] - base[leaf] - delta / 4.0).abs() < 1e-12);
    }
}

#[test]
fn released_counts_are_unbiased() {
    use steps_core::dp::{NoiseSource, StreamId};
    let truth = [30.0, 12.0, 18.0, 5.0, 7.0, 10.0, 8.0];
    let reps = 10_000;
    let scale = 2.0;
    let mut sum = vec![0.0; truth.len()];
    let mut sq = vec![0.0; truth.len()];
    for r in 0..reps {
        let mut s = NoiseSource::new(9, StreamId::root().child(r)).stream();
        let noisy: Vec<f64> = truth.iter().map(|&t| t + s.laplace(scale)).collect();
        let h = Hierarchy::complete(2, 2, &noisy).unwrap();
        let out = enforce(&h, RootMode::Observed).unwrap().released;
        for v in 0..truth.len() {
            sum[v] += out[v];
            sq[v] += out[v] * out[v];
        }
    }
    for v in 0..truth.len() {
        let mean = sum[v] / reps as f64;
        let var = sq[v] / reps as f64 - mean * mean;
        let se = (var / reps as f64).sqrt();
        assert!((mean - truth[v]).abs() < 4.0 * se, "node {v}: mean {mean} truth {}", truth[v]);
    }
}

proptest! {
    #[test]
    fn consistency_holds_without_phantoms(
        values in prop::collection::vec(-100.0f64..1000.0, 1 + 3 + 9 + 27),
        fixed in prop::option::of(0.0f64..5000.0),
    ) {
        let h = Hierarchy::complete(3, 3, &values).unwrap();
        let root = fixed.map_or(RootMode::Observed, RootMode::Fixed);
        let fit = enforce(&h, root).unwrap();
        prop_assert!(max_constraint_residual(&h, &fit.released) <= 1e-9);
        let oracle = ls_oracle(&h, root).unwrap();
        for (x, y) in fit.released.iter().zip(&oracle) {
            prop_assert!(close(*x, *y, 1e-9));
        }
    }

    #[test]
    fn consistent_input_is_a_fixed_point(leaves in prop::collection::vec(0u32..50, 9)) {
        let leaves: Vec<f64> = leaves.into_iter().map(f64::from).collect();
        let mid: Vec<f64> = leaves.chunks(3).map(|c| c.iter().sum()).collect();
        let root: f64 = mid.iter().sum();
        let mut values = vec![root];
        values.extend(&mid);
        values.extend(&leaves);
        let h = Hierarchy::complete(3, 2, &values).unwrap();
        let fit = enforce(&h, RootMode::Fixed(root)).unwrap();
        for (x, y) in fit.released.iter().zip(&values) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
