//! Feasibility analytics: full-table ℓ₁ distance and pairwise chi-squared
//! association consistency.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::{cross_tabulate, CategoricalDataset, DatasetError};
use crate::specks::SpecksResult;

pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Report {
    pub per_replicate: Vec<u64>,
    pub mean: f64,
}

/// `Σ_c |a_c − b_c|` over the full table, from sorted cell indices.
pub fn l1_cells(a: &[u64], b: &[u64]) -> u64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let runs = |v: &[u64]| -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = Vec::new();
        for &c in v {
            match out.last_mut() {
                Some((cell, n)) if *cell == c => *n += 1,
                _ => out.push((c, 1)),
            }
        }
        out
    };
    let (ra, rb) = (runs(&a), runs(&b));
    let (mut i, mut j, mut d) = (0, 0, 0u64);
    while i < ra.len() || j < rb.len() {
        match (ra.get(i), rb.get(j)) {
            (Some(&(ca, na)), Some(&(cb, nb))) if ca == cb => {
                d += na.abs_diff(nb);
                i += 1;
                j += 1;
            }
            (Some(&(ca, na)), Some(&(cb, _))) if ca < cb => {
                d += na;
                i += 1;
            }
            (Some(_), Some(&(_, nb))) => {
                d += nb;
                j += 1;
            }
            (Some(&(_, na)), None) => {
                d += na;
                i += 1;
            }
            (None, Some(&(_, nb))) => {
                d += nb;
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    d
}

/// ℓ₁ distance between two real count vectors.
pub fn l1_counts(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn l1_distance(original: &CategoricalDataset, replicates: &[CategoricalDataset]) -> Result<L1Report, DatasetError> {
    let base = original.cell_indices();
    let mut per = Vec::with_capacity(replicates.len());
    for r in replicates {
        original.ensure_same_schema(r)?;
        per.push(l1_cells(&base, &r.cell_indices()));
    }
    let mean = if per.is_empty() {
        0.0
    } else {
        per.iter().map(|&x| x as f64).sum::<f64>() / per.len() as f64
    };
    Ok(L1Report { per_replicate: per, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Rows and columns left after dropping zero margins.
    pub rows: usize,
    pub cols: usize,
}

/// Pearson test of independence on an `r × c` table (row-major). Zero
/// rows and columns are dropped first; `None` if fewer than two of either
/// remain.
pub fn pearson_chisq(table: &[u64], r: usize, c: usize) -> Option<ChiSquareTest> {
    assert_eq!(table.len(), r * c);
    let row_tot: Vec<u64> = (0..r).map(|i| table[i * c..(i + 1) * c].iter().sum()).collect();
    let col_tot: Vec<u64> = (0..c).map(|j| (0..r).map(|i| table[i * c + j]).sum()).collect();
    let rows: Vec<usize> = (0..r).filter(|&i| row_tot[i] > 0).collect();
    let cols: Vec<usize> = (0..c).filter(|&j| col_tot[j] > 0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return None;
    }
    let n: u64 = row_tot.iter().sum();
    let n = n as f64;
    let mut stat = 0.0;
    for &i in &rows {
        for &j in &cols {
            let e = row_tot[i] as f64 * col_tot[j] as f64 / n;
            let o = table[i * c + j] as f64;
            stat += (o - e) * (o - e) / e;
        }
    }
    let df = (rows.len() - 1) * (cols.len() - 1);
    let p_value = ChiSquared::new(df as f64).expect("positive df").sf(stat);
    Some(ChiSquareTest {
        statistic: stat,
        df,
        p_value,
        rows: rows.len(),
        cols: cols.len(),
    })
}

/// Folds the per-replicate p-values of one pair into a single p-value.
pub trait CombineRule: Sync {
    fn name(&self) -> &'static str;
    fn combine(&self, p_values: &[f64]) -> f64;
}

/// Median of the replicate p-values.
#[derive(Debug, Clone, Copy, Default)]
pub struct MedianRule;

impl CombineRule for MedianRule {
    fn name(&self) -> &'static str {
        "median"
    }

    fn combine(&self, p_values: &[f64]) -> f64 {
        let mut v = p_values.to_vec();
        v.sort_by(f64::total_cmp);
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub attributes: (String, String),
    pub original: ChiSquareTest,
    /// `None` marks a replicate table with a single non-empty row or
    /// column, scored as `p = 1`.
    pub replicates: Vec<Option<ChiSquareTest>>,
    pub combined_p: f64,
    /// Per alpha: (original significant, synthetic significant).
    pub decisions: Vec<(bool, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChisqReport {
    pub alphas: Vec<f64>,
    pub combine_rule: &'static str,
    pub total_pairs: usize,
    pub pairs: Vec<PairResult>,
    /// Pairs whose original table is degenerate after dropping zero margins.
    pub excluded: Vec<(String, String)>,
    pub rates: Vec<f64>,
}

fn two_way(data: &CategoricalDataset, a: usize, b: usize) -> Result<Vec<u64>, DatasetError> {
    let t = cross_tabulate(data, &[a, b])?;
    Ok(t.dense().expect("two-way tables are dense").to_vec())
}

pub fn chisq_consistency(
    original: &CategoricalDataset,
    replicates: &[CategoricalDataset],
    alphas: &[f64],
    rule: &dyn CombineRule,
) -> Result<ChisqReport, DatasetError> {
    for r in replicates {
        original.ensure_same_schema(r)?;
    }
    let schema = original.schema();
    let p = schema.len();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| (a + 1..p).map(move |b| (a, b))).collect();
    let results: Vec<Result<Result<PairResult, (String, String)>, DatasetError>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (r, c) = (schema.cardinality(a), schema.cardinality(b));
            let names = (schema.attribute(a).name.clone(), schema.attribute(b).name.clone());
            let Some(orig) = pearson_chisq(&two_way(original, a, b)?, r, c) else {
                log::info!("excluding pair {names:?}: degenerate original table");
                return Ok(Err(names));
            };
            let mut reps = Vec::with_capacity(replicates.len());
            for d in replicates {
                reps.push(pearson_chisq(&two_way(d, a, b)?, r, c));
            }
            let ps: Vec<f64> = reps.iter().map(|t| t.map_or(1.0, |t| t.p_value)).collect();
            let combined_p = if ps.is_empty() { 1.0 } else { rule.combine(&ps) };
            let decisions = alphas.iter().map(|&al| (orig.p_value < al, combined_p < al)).collect();
            Ok(Ok(PairResult {
                attributes: names,
                original: orig,
                replicates: reps,
                combined_p,
                decisions,
            }))
        })
        .collect();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for r in results {
        match r? {
            Ok(pr) => kept.push(pr),
            Err(names) => excluded.push(names),
        }
    }
    let rates = (0..alphas.len())
        .map(|k| {
            if kept.is_empty() {
                return f64::NAN;
            }
            let agree = kept.iter().filter(|pr| pr.decisions[k].0 == pr.decisions[k].1).count();
            agree as f64 / kept.len() as f64
        })
        .collect();
    Ok(ChisqReport {
        alphas: alphas.to_vec(),
        combine_rule: rule.name(),
        total_pairs: pairs.len(),
        pairs: kept,
        excluded,
        rates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct UtilityReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub specks: Option<SpecksResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1: Option<L1Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chisq: Option<ChisqReport>,
}
