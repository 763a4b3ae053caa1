//! Propensity-score KS utility: stack original and synthetic records, fit
//! a logistic model for membership of the original group, and compare the
//! two groups' score distributions.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CategoricalDataset, DatasetError};

#[derive(Debug, Error)]
pub enum SpecksError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("no synthetic replicates given")]
    NoReplicates,
    #[error("{0} dataset is empty")]
    Empty(&'static str),
    #[error("information matrix is not positive definite")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityOptions {
    /// Ridge penalty on the non-intercept coefficients.
    pub ridge: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Add every pairwise product of dummies from different attributes.
    pub interactions: bool,
}

impl Default for PropensityOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            tolerance: 1e-8,
            max_iterations: 100,
            interactions: false,
        }
    }
}

/// Distinct covariate patterns of the stacked data.
#[derive(Debug, Clone)]
pub struct PropensityDesign {
    pub columns: Vec<String>,
    pub dropped: Vec<String>,
    /// Active (value 1) columns per pattern, intercept included.
    pub rows: Vec<Vec<usize>>,
    /// Records of the original group per pattern.
    pub original: Vec<f64>,
    pub synthetic: Vec<f64>,
    /// Pattern of each original record, then each synthetic record.
    pub record_pattern: (Vec<usize>, Vec<usize>),
}

impl PropensityDesign {
    pub fn new(
        original: &CategoricalDataset,
        synthetic: &CategoricalDataset,
        interactions: bool,
    ) -> Result<Self, SpecksError> {
        original.ensure_same_schema(synthetic)?;
        let schema = original.schema();
        let p = schema.len();

        // candidate columns: intercept, dummies, optional dummy products
        let mut names = vec!["(intercept)".to_string()];
        let mut dummy = vec![Vec::new(); p];
        for j in 0..p {
            let a = schema.attribute(j);
            for level in 1..a.cardinality() {
                dummy[j].push(names.len());
                names.push(format!("{}={}", a.name, a.levels[level]));
            }
        }
        let mut pair_base = BTreeMap::new();
        if interactions {
            for j in 0..p {
                for k in j + 1..p {
                    pair_base.insert((j, k), names.len());
                    for lj in 1..schema.cardinality(j) {
                        for lk in 1..schema.cardinality(k) {
                            names.push(format!(
                                "{}={}:{}={}",
                                schema.attribute(j).name,
                                schema.attribute(j).levels[lj],
                                schema.attribute(k).name,
                                schema.attribute(k).levels[lk]
                            ));
                        }
                    }
                }
            }
        }

        let mut patterns: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
        let orig_cells = original.cell_indices();
        let syn_cells = synthetic.cell_indices();
        for &c in &orig_cells {
            patterns.entry(c).or_default().0 += 1.0;
        }
        for &c in &syn_cells {
            patterns.entry(c).or_default().1 += 1.0;
        }
        let index: BTreeMap<u64, usize> = patterns.keys().enumerate().map(|(i, &c)| (c, i)).collect();

        let mut buf = vec![0u32; p];
        let mut raw_rows = Vec::with_capacity(patterns.len());
        let mut used = vec![false; names.len()];
        used[0] = true;
        for &cell in patterns.keys() {
            schema.decode_cell(cell, &mut buf);
            let mut row = vec![0usize];
            for j in 0..p {
                if buf[j] > 0 {
                    row.push(dummy[j][buf[j] as usize - 1]);
                }
            }
            if interactions {
                for j in 0..p {
                    for k in j + 1..p {
                        if buf[j] > 0 && buf[k] > 0 {
                            let base = pair_base[&(j, k)];
                            let width = schema.cardinality(k) - 1;
                            row.push(base + (buf[j] as usize - 1) * width + buf[k] as usize - 1);
                        }
                    }
                }
            }
            for &c in &row {
                used[c] = true;
            }
            raw_rows.push(row);
        }

        let mut remap = vec![usize::MAX; names.len()];
        let mut columns = Vec::new();
        let mut dropped = Vec::new();
        for (c, name) in names.into_iter().enumerate() {
            if used[c] {
                remap[c] = columns.len();
                columns.push(name);
            } else {
                dropped.push(name);
            }
        }
        if !dropped.is_empty() {
            log::info!("dropping {} design columns absent from both groups", dropped.len());
        }
        let rows = raw_rows.into_iter().map(|r| r.into_iter().map(|c| remap[c]).collect()).collect();
        let (original_counts, synthetic_counts) = patterns.values().copied().unzip();
        Ok(Self {
            columns,
            dropped,
            rows,
            original: original_counts,
            synthetic: synthetic_counts,
            record_pattern: (
                orig_cells.iter().map(|c| index[c]).collect(),
                syn_cells.iter().map(|c| index[c]).collect(),
            ),
        })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    fn eta(&self, beta: &[f64], g: usize) -> f64 {
        self.rows[g].iter().map(|&c| beta[c]).sum()
    }

    /// Penalized log-likelihood.
    pub fn objective(&self, beta: &[f64], ridge: f64) -> f64 {
        let mut ll = 0.0;
        for g in 0..self.rows.len() {
            let eta = self.eta(beta, g);
            // log σ(η) = −softplus(−η), log(1 − σ(η)) = −softplus(η)
            ll -= self.original[g] * softplus(-eta) + self.synthetic[g] * softplus(eta);
        }
        ll - 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
    }

    /// Gradient of [`PropensityDesign::objective`].
    pub fn gradient(&self, beta: &[f64], ridge: f64) -> Vec<f64> {
        let mut grad = vec![0.0; beta.len()];
        for g in 0..self.rows.len() {
            let pr = sigmoid(self.eta(beta, g));
            let r = self.original[g] - (self.original[g] + self.synthetic[g]) * pr;
            for &c in &self.rows[g] {
                grad[c] += r;
            }
        }
        for c in 1..beta.len() {
            grad[c] -= ridge * beta[c];
        }
        grad
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityFit {
    pub columns: Vec<String>,
    pub dropped: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Fitted scores of the original records, in record order.
    pub scores_original: Vec<f64>,
    pub scores_synthetic: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Ridge-penalized logistic regression by Newton–Raphson (IRLS) with step
/// halving, started at zero.
pub fn fit_design(design: &PropensityDesign, options: &PropensityOptions) -> Result<Vec<f64>, SpecksError> {
    Ok(newton(design, options)?.0)
}

fn newton(design: &PropensityDesign, options: &PropensityOptions) -> Result<(Vec<f64>, bool, usize), SpecksError> {
    let k = design.width();
    let mut beta = vec![0.0; k];
    let mut obj = design.objective(&beta, options.ridge);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let mut grad = vec![0.0; k];
        let mut info = vec![0.0; k * k];
        for g in 0..design.rows.len() {
            let pr = sigmoid(design.eta(&beta, g));
            let total = design.original[g] + design.synthetic[g];
            let r = design.original[g] - total * pr;
            let w = total * pr * (1.0 - pr);
            let row = &design.rows[g];
            // rows list columns in increasing order: fill the upper triangle
            for (i, &a) in row.iter().enumerate() {
                grad[a] += r;
                let line = &mut info[a * k..(a + 1) * k];
                for &b in &row[i..] {
                    line[b] += w;
                }
            }
        }
        for c in 1..k {
            grad[c] -= options.ridge * beta[c];
            for d in 0..c {
                info[c * k + d] = info[d * k + c];
            }
        }
        let mut h = DMatrix::from_row_slice(k, k, &info);
        for c in 1..k {
            h[(c, c)] += options.ridge;
        }
        // the intercept is unpenalized; guard it for empty designs
        h[(0, 0)] += 1e-12;
        let step = h.cholesky().ok_or(SpecksError::Singular)?.solve(&DVector::from_vec(grad));

        let mut t = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_obj;
        loop {
            candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            cand_obj = design.objective(&candidate, options.ridge);
            if cand_obj >= obj || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        let change = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
        if cand_obj >= obj {
            beta = candidate;
            obj = cand_obj;
        }
        if change < options.tolerance {
            converged = true;
            break;
        }
    }
    Ok((beta, converged, iterations))
}

pub fn fit_propensity(
    original: &CategoricalDataset,
    synthetic: &CategoricalDataset,
    options: &PropensityOptions,
) -> Result<PropensityFit, SpecksError> {
    if original.is_empty() {
        return Err(SpecksError::Empty("original"));
    }
    if synthetic.is_empty() {
        return Err(SpecksError::Empty("synthetic"));
    }
    let design = PropensityDesign::new(original, synthetic, options.interactions)?;
    let (beta, converged, iterations) = newton(&design, options)?;
    let pattern_scores: Vec<f64> = (0..design.rows.len()).map(|g| sigmoid(design.eta(&beta, g))).collect();
    Ok(PropensityFit {
        scores_original: design.record_pattern.0.iter().map(|&g| pattern_scores[g]).collect(),
        scores_synthetic: design.record_pattern.1.iter().map(|&g| pattern_scores[g]).collect(),
        columns: design.columns,
        dropped: design.dropped,
        coefficients: beta,
        converged,
        iterations,
    })
}

/// Exact two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "score vectors must be non-empty");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    // once either side is exhausted the gap only shrinks
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecksResult {
    pub per_replicate_ks: Vec<f64>,
    pub mean_ks: f64,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    pub dropped_columns: Vec<Vec<String>>,
}

pub fn specks(
    original: &CategoricalDataset,
    replicates: &[CategoricalDataset],
    options: &PropensityOptions,
) -> Result<SpecksResult, SpecksError> {
    if replicates.is_empty() {
        return Err(SpecksError::NoReplicates);
    }
    let fits: Vec<Result<PropensityFit, SpecksError>> =
        replicates.par_iter().map(|r| fit_propensity(original, r, options)).collect();
    let mut per = Vec::new();
    let mut converged = Vec::new();
    let mut iterations = Vec::new();
    let mut dropped = Vec::new();
    for f in fits {
        let f = f?;
        per.push(ks_distance(&f.scores_original, &f.scores_synthetic));
        converged.push(f.converged);
        iterations.push(f.iterations);
        dropped.push(f.dropped);
    }
    let mean_ks = per.iter().sum::<f64>() / per.len() as f64;
    Ok(SpecksResult {
        per_replicate_ks: per,
        mean_ks,
        converged,
        iterations,
        dropped_columns: dropped,
    })
}
