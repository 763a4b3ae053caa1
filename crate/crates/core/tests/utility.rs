use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steps_core::dataset::{Attribute, CategoricalDataset, Schema};
use steps_core::mock::{uniform_mock, voter_mock};
use steps_core::utility::*;

/// Textbook Σ (O−E)²/E after dropping empty rows and columns.
fn chisq_oracle(table: &[Vec<u64>]) -> Option<(f64, usize)> {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let c = table[0].len();
    let cols: Vec<usize> = (0..c).filter(|&j| table.iter().map(|r| r[j]).sum::<u64>() > 0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return None;
    }
    let n: f64 = rows.iter().map(|r| r.iter().sum::<u64>() as f64).sum();
    let mut stat = 0.0;
    for r in &rows {
        let rt: f64 = r.iter().sum::<u64>() as f64;
        for &j in &cols {
            let ct: f64 = rows.iter().map(|x| x[j] as f64).sum();
            let e = rt * ct / n;
            stat += (r[j] as f64 - e).powi(2) / e;
        }
    }
    Some((stat, (rows.len() - 1) * (cols.len() - 1)))
}

#[test]
fn chisq_matches_textbook_on_small_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let r = rng.random_range(1..=5);
        let c = rng.random_range(1..=(20 / r).min(6));
        let table: Vec<Vec<u64>> = (0..r)
            .map(|_| (0..c).map(|_| if rng.random_bool(0.2) { 0 } else { rng.random_range(0..40) }).collect())
            .collect();
        let flat: Vec<u64> = table.concat();
        match (pearson_chisq(&flat, r, c), chisq_oracle(&table)) {
            (Some(t), Some((stat, df))) => {
                assert!((t.statistic - stat).abs() <= 1e-9 * stat.max(1.0));
                assert_eq!(t.df, df);
                assert!((0.0..=1.0).contains(&t.p_value));
            }
            (None, None) => {}
            (a, b) => panic!("disagree: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn chisq_p_value_reference() {
    // statistic 3.841458820694124 is the 0.95 quantile of χ²(1)
    let t = pearson_chisq(&[10, 20, 20, 40], 2, 2).unwrap();
    assert!(t.statistic.abs() < 1e-12);
    assert!((t.p_value - 1.0).abs() < 1e-12);
    let t = pearson_chisq(&[30, 10, 10, 30], 2, 2).unwrap();
    assert!((t.statistic - 20.0).abs() < 1e-12);
    assert!(t.p_value < 1e-4);
}

#[test]
fn identical_data_is_fully_consistent() {
    let data = voter_mock(3000, 5);
    let report = chisq_consistency(&data, &vec![data.clone(); 5], &DEFAULT_ALPHAS, &MedianRule).unwrap();
    assert_eq!(report.total_pairs, 105);
    assert_eq!(report.pairs.len() + report.excluded.len(), 105);
    assert!(report.rates.iter().all(|&r| r == 1.0));
    let l1 = l1_distance(&data, &[data.clone()]).unwrap();
    assert_eq!(l1.per_replicate, vec![0]);
}

#[test]
fn median_rule() {
    assert_eq!(MedianRule.combine(&[0.3, 0.01, 0.9]), 0.3);
    assert_eq!(MedianRule.combine(&[0.2, 0.4]), 0.30000000000000004);
    assert_eq!(MedianRule.combine(&[0.5]), 0.5);
}

#[test]
fn l1_matches_cell_scan_on_four_cells() {
    let schema = Arc::new(Schema::new(vec![Attribute::new("a", ["0", "1"]), Attribute::new("b", ["0", "1"])]).unwrap());
    let orig = uniform_mock(schema.clone(), 200, 1);
    let syn = uniform_mock(schema.clone(), 200, 2);
    let count = |d: &CategoricalDataset| {
        let mut c = [0i64; 4];
        for r in d.records() {
            c[(r[0] * 2 + r[1]) as usize] += 1;
        }
        c
    };
    let (a, b) = (count(&orig), count(&syn));
    let expected: i64 = (0..4).map(|i| (a[i] - b[i]).abs()).sum();
    assert_eq!(l1_distance(&orig, &[syn]).unwrap().per_replicate[0] as i64, expected);
    assert_eq!(l1_cells(&[0; 7], &[3; 7]), 14);
}

#[test]
fn consistency_rate_ignores_attribute_order() {
    let data = voter_mock(2000, 8);
    let reps: Vec<CategoricalDataset> = (0..3).map(|s| voter_mock(2000, 100 + s)).collect();
    let base = chisq_consistency(&data, &reps, &DEFAULT_ALPHAS, &MedianRule).unwrap();

    let p = data.schema().len();
    let perm: Vec<usize> = (0..p).rev().collect();
    let schema = Arc::new(Schema::new(perm.iter().map(|&j| data.schema().attribute(j).clone()).collect()).unwrap());
    let permute = |d: &CategoricalDataset| {
        let recs = d.records().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
        CategoricalDataset::new(schema.clone(), recs).unwrap()
    };
    let reps2: Vec<CategoricalDataset> = reps.iter().map(permute).collect();
    let other = chisq_consistency(&permute(&data), &reps2, &DEFAULT_ALPHAS, &MedianRule).unwrap();
    assert_eq!(base.pairs.len(), other.pairs.len());
    for (a, b) in base.rates.iter().zip(&other.rates) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn arb_triple() -> impl Strategy<Value = [Vec<u64>; 3]> {
    let v = || prop::collection::vec(0u64..30, 0..60);
    (v(), v(), v()).prop_map(|(a, b, c)| [a, b, c])
}

proptest! {
    #[test]
    fn l1_is_a_metric(cells in arb_triple()) {
        let [a, b, c] = cells;
        prop_assert_eq!(l1_cells(&a, &b), l1_cells(&b, &a));
        prop_assert!(l1_cells(&a, &c) <= l1_cells(&a, &b) + l1_cells(&b, &c));
        prop_assert_eq!(l1_cells(&a, &a), 0);
        let mut counts_a = [0i64; 30];
        let mut counts_b = [0i64; 30];
        a.iter().for_each(|&x| counts_a[x as usize] += 1);
        b.iter().for_each(|&x| counts_b[x as usize] += 1);
        let brute: i64 = (0..30).map(|i| (counts_a[i] - counts_b[i]).abs()).sum();
        prop_assert_eq!(l1_cells(&a, &b) as i64, brute);
    }
}
