//! Synthesis drivers: tree-based (elected or random partitions) and the
//! one-step Laplace sanitizer over the full cross-tabulation.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::consistency::{enforce_values, ConsistencyError, ConsistentCounts, Hierarchy, RootMode};
use crate::dataset::{full_table, CategoricalDataset, DatasetError, Schema, DENSE_CELL_LIMIT};
use crate::dp::{
    laplace_scale, BudgetLedger, Composition, DpError, NoiseSource, PrivacyBudget, Sensitivity, StreamId,
};
use crate::plan::{PlanError, SanitizationPlan};
use crate::tree::{build_tree, pad_phantoms, random_partition_tree, PartitionTree, TreeError};

/// Cells per noise stream in the full-table sanitizer.
const FULL_TABLE_BLOCK: usize = 4096;

/// Fractional parts within this distance of an integer are snapped.
const SNAP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error("full table too large: {cells} cells exceeds the limit of {limit}")]
    TableTooLarge { cells: u64, limit: u64 },
    #[error("tree has {found} sanitized levels but {expected} budget shares were given")]
    ShareCount { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyData,
}

impl SynthError {
    /// True when the failure is a refused or over-allocated budget.
    pub fn is_budget_violation(&self) -> bool {
        match self {
            SynthError::Dp(DpError::BudgetExceeded { .. }) => true,
            SynthError::Plan(e) => e.is_budget_violation(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Steps,
    RandomPartition,
    LaplaceFull,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Steps => "steps",
            Method::RandomPartition => "random-partition",
            Method::LaplaceFull => "laplace-full",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "steps" => Ok(Method::Steps),
            "random-partition" => Ok(Method::RandomPartition),
            "laplace-full" => Ok(Method::LaplaceFull),
            _ => Err(format!("unknown method {s:?} (expected steps, random-partition or laplace-full)")),
        }
    }
}

/// How consistent tree counts become record-emission weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PostProcess {
    /// Top-down: clamp children at zero, drop phantoms, rescale each
    /// sibling group to its parent's processed count.
    #[default]
    Hierarchical,
    /// Clamp the leaf cells at zero and rescale them jointly.
    Flat,
}

/// How `n` records are drawn from non-negative cell weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Emission {
    /// `⌊q_i⌋` records per cell, the remainder drawn multinomially from
    /// the fractional parts, where `q_i` is the cell's share of `n`.
    #[default]
    Rounded,
    /// All `n` records drawn multinomially.
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub post_process: PostProcess,
    pub emission: Emission,
    /// Keep per-replicate released full-table counts in the result.
    pub keep_released: bool,
    /// Include true counts in the tree audit.
    pub debug_audit: bool,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub replicates: Vec<CategoricalDataset>,
    /// Per replicate, released counts over full-table cells in cell order
    /// (empty unless requested).
    pub released_counts: Vec<Vec<f64>>,
    pub ledger: BudgetLedger,
    pub audit: serde_json::Value,
}

/// Run-level noise namespace; every replicate is a child stream.
fn run_source(seed: u64, method: Method) -> NoiseSource {
    NoiseSource::new(seed, StreamId::root().tagged(method.name()))
}

/// STEPS: elected partitions, padded, sanitized per layer, made consistent.
pub fn steps_synthesize(
    data: &CategoricalDataset,
    plan: &SanitizationPlan,
    options: &SynthesisOptions,
) -> Result<SynthesisResult, SynthError> {
    check_table(data.schema())?;
    let tree = pad_phantoms(build_tree(data, plan)?)?;
    tree_synthesize(data, &tree, plan, Method::Steps, options)
}

/// Random-partition baseline: one uniformly drawn attribute per layer.
pub fn random_partition_synthesize(
    data: &CategoricalDataset,
    plan: &SanitizationPlan,
    options: &SynthesisOptions,
) -> Result<SynthesisResult, SynthError> {
    check_table(data.schema())?;
    let tree = pad_phantoms(random_partition_tree(data, plan, plan.seed)?)?;
    tree_synthesize(data, &tree, plan, Method::RandomPartition, options)
}

/// Dispatches on `method`; the full-table sanitizer ignores the tree
/// fields of `plan`.
pub fn synthesize(
    data: &CategoricalDataset,
    method: Method,
    plan: &SanitizationPlan,
    options: &SynthesisOptions,
) -> Result<SynthesisResult, SynthError> {
    match method {
        Method::Steps => steps_synthesize(data, plan, options),
        Method::RandomPartition => random_partition_synthesize(data, plan, options),
        Method::LaplaceFull => laplace_full_synthesize(data, plan.epsilon, plan.replicates, plan.seed, options),
    }
}

fn check_table(schema: &Schema) -> Result<(), SynthError> {
    let cells = schema.cell_count();
    if cells > DENSE_CELL_LIMIT {
        return Err(SynthError::TableTooLarge {
            cells,
            limit: DENSE_CELL_LIMIT,
        });
    }
    Ok(())
}

/// A padded partition tree flattened for the consistency solver: depths
/// `1..=L` are the partition layers (ids shared with the tree), the last
/// depth holds the leaf-block cells.
pub struct TreeLayout {
    hierarchy: Hierarchy,
    /// Full-table cell of every node at the deepest level.
    leaf_cells: Vec<u64>,
    tree_nodes: usize,
}

impl TreeLayout {
    pub fn new(tree: &PartitionTree) -> Result<Self, SynthError> {
        assert!(tree.is_padded(), "tree must be padded");
        let mut h = Hierarchy::new(tree.node(0).true_count as f64);
        for l in 1..=tree.layers() {
            let items: Vec<(usize, f64)> =
                tree.layer(l).map(|id| (tree.node(id).parent.expect("non-root"), tree.node(id).true_count as f64)).collect();
            h.push_level(tree.branching(), items)?;
        }
        let last = tree.layer(tree.layers());
        let leaf_cells = if tree.has_leaf_blocks() {
            let mut items = Vec::with_capacity(tree.leaf_cell_count());
            let mut cells = Vec::with_capacity(tree.leaf_cell_count());
            for id in last {
                let block = tree.node(id).leaf_block.as_ref().expect("leaf block");
                items.extend(block.counts.iter().map(|&c| (id, c as f64)));
                cells.extend(tree.leaf_full_indices(id));
            }
            h.push_level(tree.leaf_width(), items)?;
            cells
        } else {
            last.flat_map(|id| tree.leaf_full_indices(id)).collect()
        };
        h.validate()?;
        Ok(Self {
            hierarchy: h,
            leaf_cells,
            tree_nodes: tree.nodes().len(),
        })
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    /// Number of sanitized levels (every depth below the root).
    pub fn sanitized_levels(&self) -> usize {
        self.hierarchy.height()
    }

    pub fn leaf_cells(&self) -> &[u64] {
        &self.leaf_cells
    }

    fn leaf_range(&self) -> std::ops::Range<usize> {
        self.hierarchy.depth(self.hierarchy.height())
    }
}

/// One sanitized replicate of a tree.
pub struct SanitizedTree {
    pub noisy: Vec<f64>,
    pub consistent: ConsistentCounts,
}

/// Adds Laplace noise at every depth below the root (depth `d` with
/// `budgets[d-1]`, one stream per sibling group) and fits consistency
/// with the root fixed at `n`.
pub fn sanitize_layout(
    layout: &TreeLayout,
    budgets: &[PrivacyBudget],
    src: &NoiseSource,
) -> Result<SanitizedTree, SynthError> {
    let h = &layout.hierarchy;
    if budgets.len() != h.height() {
        return Err(SynthError::ShareCount {
            expected: h.height(),
            found: budgets.len(),
        });
    }
    let mut noisy = h.values().to_vec();
    for d in 1..=h.height() {
        let scale = laplace_scale(Sensitivity::HISTOGRAM, budgets[d - 1]);
        if scale == 0.0 {
            continue;
        }
        let parents = h.depth(d - 1);
        let level_src = src.child(d as u64);
        let noise: Vec<Vec<f64>> = parents
            .clone()
            .into_par_iter()
            .map(|u| {
                let mut s = level_src.child((u - parents.start) as u64).stream();
                h.children(u).map(|_| s.laplace(scale)).collect()
            })
            .collect();
        for (u, eps) in parents.zip(noise) {
            for (w, e) in h.children(u).zip(eps) {
                noisy[w] += e;
            }
        }
    }
    let consistent = enforce_values(h, &noisy, RootMode::Fixed(h.values()[0]))?;
    Ok(SanitizedTree {
        noisy,
        consistent,
    })
}

/// Hierarchical post-processing: the root keeps `total`; each sibling
/// group is clamped at zero and rescaled to its parent's processed value,
/// uniform when every sibling clamps to zero. Phantoms get nothing.
pub fn renormalize_top_down(h: &Hierarchy, released: &[f64], total: f64) -> Vec<f64> {
    let mut out = vec![0.0; released.len()];
    out[0] = total;
    for d in 0..h.height() {
        for u in h.depth(d) {
            let kids = h.children(u);
            let s: f64 = kids.clone().map(|w| released[w].max(0.0)).sum();
            if out[u] <= 0.0 {
                continue;
            }
            if s > 0.0 {
                let f = out[u] / s;
                for w in kids {
                    out[w] = released[w].max(0.0) * f;
                }
            } else {
                let share = out[u] / kids.len() as f64;
                for w in kids {
                    out[w] = share;
                }
            }
        }
    }
    out
}

/// Emits `n` records from released full-table counts: negatives clamp to
/// zero, all-zero counts fall back to uniform over the cells. Records come
/// out in cell order.
pub fn counts_to_records(
    schema: Arc<Schema>,
    counts: &[f64],
    n: usize,
    src: &NoiseSource,
    emission: Emission,
) -> CategoricalDataset {
    let cells = emission_counts(counts, n, src, emission);
    CategoricalDataset::from_cell_counts(schema, cells)
}

/// Per-cell record counts (sparse, in cell order) summing to `n`.
pub fn emission_counts(counts: &[f64], n: usize, src: &NoiseSource, emission: Emission) -> Vec<(u64, u64)> {
    if n == 0 || counts.is_empty() {
        return Vec::new();
    }
    let total: f64 = counts.iter().map(|&c| c.max(0.0)).sum();
    let uniform = !(total > 0.0) || !total.is_finite();
    let weight = |c: f64| if uniform { 1.0 } else { c.max(0.0) };
    let total = if uniform { counts.len() as f64 } else { total };
    let mut stream = src.stream();
    match emission {
        Emission::Multinomial => {
            let cum = cumulative(counts.iter().map(|&c| weight(c)));
            tally(draw_from(&cum, n as u64, &mut stream))
        }
        Emission::Rounded => {
            let scale = n as f64 / total;
            let mut whole_counts = Vec::new();
            let mut assigned = 0u64;
            let cum = cumulative(counts.iter().enumerate().map(|(i, &c)| {
                let q = weight(c) * scale;
                // q ≥ 0, so truncating casts give round and floor cheaply
                let r = (q + 0.5) as u64 as f64;
                let whole = if (q - r).abs() <= SNAP { r } else { q as u64 as f64 };
                if whole > 0.0 {
                    whole_counts.push((i as u64, whole as u64));
                    assigned += whole as u64;
                }
                (q - whole).max(0.0)
            }));
            if assigned > n as u64 {
                // snapping pushed past n: trim from the largest cells
                let mut excess = assigned - n as u64;
                let mut order: Vec<usize> = (0..whole_counts.len()).collect();
                order.sort_by(|&a, &b| whole_counts[b].1.cmp(&whole_counts[a].1).then(a.cmp(&b)));
                for i in order {
                    let take = whole_counts[i].1.min(excess);
                    whole_counts[i].1 -= take;
                    excess -= take;
                    if excess == 0 {
                        break;
                    }
                }
                whole_counts.retain(|&(_, c)| c > 0);
                return whole_counts;
            }
            let rest = n as u64 - assigned;
            let extra = if rest == 0 {
                Vec::new()
            } else if cum.last().copied().unwrap_or(0.0) > 0.0 {
                tally(draw_from(&cum, rest, &mut stream))
            } else {
                let cum = cumulative(counts.iter().map(|&c| weight(c)));
                tally(draw_from(&cum, rest, &mut stream))
            };
            merge_counts(whole_counts, extra)
        }
    }
}

fn cumulative(w: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    w.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

/// Cell indices of `draws` draws proportional to the increments of `cum`,
/// located by one sweep over the sorted targets.
fn draw_from(cum: &[f64], draws: u64, stream: &mut crate::dp::NoiseStream) -> Vec<u64> {
    let total = *cum.last().expect("non-empty");
    let mut targets: Vec<f64> = (0..draws).map(|_| stream.uniform() * total).collect();
    targets.sort_by(f64::total_cmp);
    // the first cell reaching the total has positive weight
    let last_positive = cum.iter().position(|&c| c == total).expect("present");
    let mut out = Vec::with_capacity(targets.len());
    let mut i = 0;
    for t in targets {
        while i < cum.len() && cum[i] <= t {
            i += 1;
        }
        out.push(i.min(last_positive) as u64);
    }
    out
}

fn tally(mut cells: Vec<u64>) -> Vec<(u64, u64)> {
    cells.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::new();
    for c in cells {
        match out.last_mut() {
            Some((cell, k)) if *cell == c => *k += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

fn merge_counts(a: Vec<(u64, u64)>, b: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j].0 < a[i].0 {
            out.push(b[j]);
            j += 1;
        } else {
            out.push((a[i].0, a[i].1 + b[j].1));
            i += 1;
            j += 1;
        }
    }
    out
}

/// Synthesis over an already padded tree; `plan.shares` must cover every
/// sanitized level of the tree.
pub fn tree_synthesize(
    data: &CategoricalDataset,
    tree: &PartitionTree,
    plan: &SanitizationPlan,
    method: Method,
    options: &SynthesisOptions,
) -> Result<SynthesisResult, SynthError> {
    let layout = TreeLayout::new(tree)?;
    layout_synthesize(data, tree, &layout, plan, method, options)
}

/// [`tree_synthesize`] with the layout already flattened.
pub fn layout_synthesize(
    data: &CategoricalDataset,
    tree: &PartitionTree,
    layout: &TreeLayout,
    plan: &SanitizationPlan,
    method: Method,
    options: &SynthesisOptions,
) -> Result<SynthesisResult, SynthError> {
    if data.n() == 0 {
        return Err(SynthError::EmptyData);
    }
    let levels = layout.sanitized_levels();
    if plan.shares.len() != levels {
        return Err(SynthError::ShareCount {
            expected: levels,
            found: plan.shares.len(),
        });
    }
    let budgets: Vec<PrivacyBudget> = (1..=levels).map(|l| plan.layer_budget(l)).collect();

    // charge everything up front so a refused spend releases nothing
    let mut ledger = BudgetLedger::new(plan.epsilon);
    let h = layout.hierarchy();
    for r in 0..plan.replicates {
        for (l, b) in budgets.iter().enumerate() {
            let cells = h.depth(l + 1).len() as u64;
            let group = format!("replicate-{}/layer-{}", r + 1, l + 1);
            ledger.charge(group.clone(), b.epsilon(), Composition::Parallel(group), cells)?;
        }
    }

    let run = run_source(plan.seed, method);
    let n = data.n();
    let schema = data.schema().clone();
    let full_cells = schema.cell_count() as usize;
    let outputs: Vec<Result<(CategoricalDataset, Vec<f64>, SanitizedTree), SynthError>> = (0..plan.replicates)
        .into_par_iter()
        .map(|r| {
            let src = run.child(r as u64);
            let sanitized = sanitize_layout(layout, &budgets, &src.tagged("noise"))?;
            let released = &sanitized.consistent.released;
            let leaves = layout.leaf_range();
            let renormalized;
            let weights = match options.post_process {
                PostProcess::Hierarchical => {
                    renormalized = renormalize_top_down(h, released, n as f64);
                    &renormalized[leaves.clone()]
                }
                PostProcess::Flat => &released[leaves.clone()],
            };
            // emit in leaf order, then map to full-table cells
            let mut cells: Vec<(u64, u64)> = emission_counts(weights, n, &src.tagged("emit"), options.emission)
                .into_iter()
                .map(|(i, c)| (layout.leaf_cells[i as usize], c))
                .collect();
            cells.sort_unstable();
            let dataset = CategoricalDataset::from_cell_counts(schema.clone(), cells);
            let kept = if options.keep_released {
                let mut rel = vec![0.0; full_cells];
                for (&cell, &x) in layout.leaf_cells.iter().zip(&released[leaves]) {
                    rel[cell as usize] = x;
                }
                rel
            } else {
                Vec::new()
            };
            Ok((dataset, kept, sanitized))
        })
        .collect();

    let mut replicates = Vec::with_capacity(plan.replicates);
    let mut released_counts = Vec::new();
    let mut phantom_mass = Vec::new();
    let mut first: Option<SanitizedTree> = None;
    for out in outputs {
        let (d, rel, s) = out?;
        replicates.push(d);
        if options.keep_released {
            released_counts.push(rel);
        }
        phantom_mass.push(s.consistent.phantom_mass);
        if first.is_none() {
            first = Some(s);
        }
    }
    let first = first.expect("at least one replicate");
    let k = layout.tree_nodes;
    let tree_audit = tree.audit(options.debug_audit, Some(&first.noisy[..k]), Some(&first.consistent.released[..k]));
    let audit = json!({
        "method": method.name(),
        "plan": plan,
        "sanitized_layers": levels,
        "layer_budgets": budgets.iter().map(|b| b.epsilon()).collect::<Vec<_>>(),
        "post_process": options.post_process,
        "emission": options.emission,
        "padding": {
            "branching": tree.branching(),
            "leaf_width": tree.leaf_width(),
            "rule": "partition layers padded to the maximum cardinality; leaf blocks padded to the widest block",
        },
        "phantom_mass": phantom_mass,
        "tree": tree_audit,
    });
    Ok(SynthesisResult {
        replicates,
        released_counts,
        ledger,
        audit,
    })
}

/// Data-dependent work that does not consume budget (tree building and
/// flattening, or the full cross-tabulation), reusable across runs that
/// differ only in ε, m or seed.
pub enum Prepared {
    Tree {
        method: Method,
        tree: PartitionTree,
        layout: TreeLayout,
    },
    Full {
        truth: Vec<f64>,
    },
}

impl Prepared {
    /// Builds the structure for `method`; tree methods use `plan.layers`,
    /// and the random-partition order is drawn from `plan.seed`.
    pub fn new(data: &CategoricalDataset, method: Method, plan: &SanitizationPlan) -> Result<Self, SynthError> {
        let tree = match method {
            Method::LaplaceFull => return Ok(Prepared::Full { truth: full_counts(data)? }),
            Method::Steps => {
                check_table(data.schema())?;
                build_tree(data, plan)?
            }
            Method::RandomPartition => {
                check_table(data.schema())?;
                random_partition_tree(data, plan, plan.seed)?
            }
        };
        let tree = pad_phantoms(tree)?;
        let layout = TreeLayout::new(&tree)?;
        Ok(Prepared::Tree { method, tree, layout })
    }

    pub fn method(&self) -> Method {
        match self {
            Prepared::Tree { method, .. } => *method,
            Prepared::Full { .. } => Method::LaplaceFull,
        }
    }

    pub fn run(
        &self,
        data: &CategoricalDataset,
        plan: &SanitizationPlan,
        options: &SynthesisOptions,
    ) -> Result<SynthesisResult, SynthError> {
        match self {
            Prepared::Tree { method, tree, layout } => layout_synthesize(data, tree, layout, plan, *method, options),
            Prepared::Full { truth } => {
                laplace_full_from_counts(data, truth, plan.epsilon, plan.replicates, plan.seed, options)
            }
        }
    }
}

/// One-step Laplace sanitizer: every full-table cell gets Lap(m/ε) noise.
pub fn laplace_full_synthesize(
    data: &CategoricalDataset,
    epsilon: PrivacyBudget,
    replicates: usize,
    seed: u64,
    options: &SynthesisOptions,
) -> Result<SynthesisResult, SynthError> {
    if replicates == 0 {
        return Err(PlanError::NoReplicates.into());
    }
    if data.n() == 0 {
        return Err(SynthError::EmptyData);
    }
    let truth = full_counts(data)?;
    laplace_full_from_counts(data, &truth, epsilon, replicates, seed, options)
}

/// Dense full-table counts, refusing tables over the dense limit.
pub fn full_counts(data: &CategoricalDataset) -> Result<Vec<f64>, SynthError> {
    check_table(data.schema())?;
    let table = full_table(data)?;
    match table.dense() {
        Some(c) => Ok(c.iter().map(|&x| x as f64).collect()),
        None => unreachable!("tables under the dense limit are dense"),
    }
}

/// [`laplace_full_synthesize`] with the true full-table counts given.
pub fn laplace_full_from_counts(
    data: &CategoricalDataset,
    truth: &[f64],
    epsilon: PrivacyBudget,
    replicates: usize,
    seed: u64,
    options: &SynthesisOptions,
) -> Result<SynthesisResult, SynthError> {
    if replicates == 0 {
        return Err(PlanError::NoReplicates.into());
    }
    let per = epsilon.fraction(1.0 / replicates as f64);
    let mut ledger = BudgetLedger::new(epsilon);
    for r in 0..replicates {
        let group = format!("replicate-{}/full-table", r + 1);
        ledger.charge(group.clone(), per.epsilon(), Composition::Parallel(group), truth.len() as u64)?;
    }
    let scale = laplace_scale(Sensitivity::HISTOGRAM, per);
    let run = run_source(seed, Method::LaplaceFull);
    let schema = data.schema().clone();
    let n = data.n();
    let outputs: Vec<(CategoricalDataset, Vec<f64>)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let src = run.child(r as u64);
            let noise_src = src.tagged("noise");
            let mut noisy = truth.to_vec();
            if scale > 0.0 {
                noisy.par_chunks_mut(FULL_TABLE_BLOCK).enumerate().for_each(|(b, chunk)| {
                    let mut s = noise_src.child(b as u64).stream();
                    for v in chunk {
                        *v += s.laplace(scale);
                    }
                });
            }
            let dataset = counts_to_records(schema.clone(), &noisy, n, &src.tagged("emit"), options.emission);
            (dataset, if options.keep_released { noisy } else { Vec::new() })
        })
        .collect();
    let (replicates_out, released): (Vec<_>, Vec<_>) = outputs.into_iter().unzip();
    let audit = json!({
        "method": Method::LaplaceFull.name(),
        "epsilon": epsilon,
        "replicates": replicates,
        "seed": seed,
        "per_replicate_epsilon": per.epsilon(),
        "cells": truth.len(),
        "emission": options.emission,
    });
    Ok(SynthesisResult {
        replicates: replicates_out,
        released_counts: if options.keep_released { released } else { Vec::new() },
        ledger,
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Attribute;
    use crate::plan::AllocationScheme;

    fn src() -> NoiseSource {
        NoiseSource::new(1, StreamId::root())
    }

    fn binary(p: usize) -> Arc<Schema> {
        Arc::new(Schema::new((0..p).map(|j| Attribute::new(format!("a{j}"), ["0", "1"])).collect()).unwrap())
    }

    #[test]
    fn emission_examples() {
        let c = emission_counts(&[4.0, 0.0, 0.0, 0.0], 4, &src(), Emission::Rounded);
        assert_eq!(c, vec![(0, 4)]);
        let c = emission_counts(&[4.0, 0.0, 0.0, 0.0], 4, &src(), Emission::Multinomial);
        assert_eq!(c, vec![(0, 4)]);
        let c = emission_counts(&[-2.0, 6.0], 5, &src(), Emission::Multinomial);
        assert_eq!(c, vec![(1, 5)]);
        let c = emission_counts(&[-1.0, -3.0], 6, &src(), Emission::Rounded);
        assert_eq!(c, vec![(0, 3), (1, 3)]);
        let c = emission_counts(&[0.5, 0.5, 1.0], 3, &src(), Emission::Rounded);
        assert_eq!(c.iter().map(|x| x.1).sum::<u64>(), 3);
        assert!(c.contains(&(2, 1)) || c.contains(&(2, 2)));
    }

    #[test]
    fn top_down_renormalization_conserves_totals() {
        let mut h = Hierarchy::new(10.0);
        h.push_level(3, [(0, 4.0), (0, 6.0)]).unwrap();
        h.push_level(2, [(1, 1.0), (1, 3.0), (2, 7.0), (2, -1.0)]).unwrap();
        let released = [10.5, -1.0, 11.5, 1.0, 3.0, 7.0, -1.0];
        let out = renormalize_top_down(&h, &released, 10.0);
        assert_eq!(out[1], 0.0);
        assert_eq!(out[2], 10.0);
        // node 1 got zero, so its leaves are zero
        assert_eq!(&out[3..5], &[0.0, 0.0]);
        assert_eq!(&out[5..], &[10.0, 0.0]);
    }

    #[test]
    fn ledger_and_replicates_for_steps() {
        let schema = binary(3);
        let records: Vec<Vec<u32>> = (0..40u32).map(|i| vec![i % 2, (i / 2) % 2, u32::from(i % 5 == 0)]).collect();
        let data = CategoricalDataset::new(schema.clone(), records).unwrap();
        let eps = PrivacyBudget::new(1.5).unwrap();
        for m in [1, 5] {
            let plan = SanitizationPlan::new(&schema, 1, AllocationScheme::HalfSplit, m, eps, 3).unwrap();
            let r = steps_synthesize(&data, &plan, &SynthesisOptions::default()).unwrap();
            assert_eq!(r.replicates.len(), m);
            assert!(r.replicates.iter().all(|d| d.n() == 40));
            assert!((r.ledger.total() - 1.5).abs() <= 1.5 * 1e-12);
            assert_eq!(r.ledger.entries().len(), 2 * m);
        }
    }

    #[test]
    fn full_table_too_large() {
        let attrs: Vec<Attribute> = (0..25).map(|j| Attribute::new(format!("a{j}"), ["0", "1"])).collect();
        let schema = Arc::new(Schema::new(attrs).unwrap());
        let data = CategoricalDataset::new(schema, vec![vec![0; 25]]).unwrap();
        let e = laplace_full_synthesize(&data, PrivacyBudget::new(1.0).unwrap(), 1, 0, &SynthesisOptions::default())
            .unwrap_err();
        assert!(e.to_string().contains("full table too large"));
    }
}
