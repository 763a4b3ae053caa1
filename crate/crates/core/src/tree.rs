//! Partition hierarchy built by sequential attribute election.
//!
//! Layer 0 is the root (all records). Each node of layers `0..L` is split on
//! its most valuable attribute (MVA): the available attribute whose one-way
//! Poisson loglinear model improves AIC the most over the intercept-only
//! model on the node's records. Every node of layer `L` then carries a leaf
//! block, the full cross-tabulation of the attributes not used on its path.
//!
//! Nodes are stored in breadth-first order: the nodes of a layer occupy a
//! contiguous id range, and the children of a node are contiguous within the
//! next layer, ordered by level. Phantom padding is recorded as counts rather
//! than materialized nodes; phantom subtrees are structural zeros.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::dataset::{CategoricalDataset, Schema};
use crate::dp::{NoiseSource, StreamId};
use crate::plan::SanitizationPlan;

pub type NodeId = usize;

/// Printed with every tree audit: the election step reads the confidential
/// data and is not charged to the privacy ledger.
pub const ELECTION_WARNING: &str =
    "attribute election reads the confidential data and is not charged to the privacy ledger";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("tree height {layers} exceeds the number of attributes {attributes}")]
    TooManyLayers { layers: usize, attributes: usize },
    #[error("partition tree is already padded")]
    AlreadyPadded,
}

/// Set of attribute indices (schemas are limited to 64 attributes by the
/// 64-bit cell-count check).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(transparent)]
pub struct AttrSet(u64);

impl AttrSet {
    pub fn all(p: usize) -> Self {
        if p >= 64 {
            Self(u64::MAX)
        } else {
            Self((1u64 << p) - 1)
        }
    }

    pub fn contains(self, a: usize) -> bool {
        self.0 >> a & 1 == 1
    }

    pub fn with(self, a: usize) -> Self {
        Self(self.0 | (1u64 << a))
    }

    pub fn without(self, a: usize) -> Self {
        Self(self.0 & !(1u64 << a))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Members in increasing (schema) order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&a| self.contains(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Condition {
    pub attribute: usize,
    pub level: u32,
}

/// AIC improvement of one candidate attribute on a node's records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MvaScore {
    pub attribute: usize,
    /// AIC(one-attribute model) − AIC(intercept-only); lower is better.
    pub delta_aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub attribute: usize,
    /// Scores of every available candidate; empty for random splits.
    pub candidates: Vec<MvaScore>,
}

/// Full cross-tabulation of the leftover attributes under a layer-`L` node.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafBlock {
    /// Remaining attributes in schema order; cell index is mixed-radix over
    /// them with the first most significant.
    pub attributes: Vec<usize>,
    pub counts: Vec<u64>,
}

impl LeafBlock {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub parent: Option<NodeId>,
    pub condition: Option<Condition>,
    pub layer: usize,
    /// Attributes not yet used on the path from the root.
    pub available: AttrSet,
    pub true_count: u64,
    pub split: Option<Split>,
    /// First child id and number of real children.
    pub children: Range<NodeId>,
    /// Phantom children added by padding (zero-count, never materialized).
    pub phantom_children: usize,
    pub leaf_block: Option<LeafBlock>,
}

#[derive(Debug, Clone)]
pub struct PartitionTree {
    schema: Arc<Schema>,
    layers: usize,
    nodes: Vec<TreeNode>,
    layer_ranges: Vec<Range<NodeId>>,
    /// Constant branching of partition layers after padding.
    branching: usize,
    /// Width of every leaf block after padding (0 when `L = p`).
    leaf_width: usize,
    padded: bool,
}

enum SplitRule<'a> {
    Elect,
    Order(&'a [usize]),
}

/// `ΔAIC = −2 Σ_k n_k ln(n_k K / n) + 2(K − 1)` with `0 ln 0 = 0`;
/// `+∞` for an empty subset.
pub fn aic_delta(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return f64::INFINITY;
    }
    let k = counts.len() as f64;
    let n = n as f64;
    let fit: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let c = c as f64;
            c * (c * k / n).ln()
        })
        .sum();
    -2.0 * fit + 2.0 * (k - 1.0)
}

/// Elects the MVA among `available` on the listed rows. Ties go to the
/// attribute earliest in schema order.
pub fn elect_mva(data: &CategoricalDataset, rows: &[u32], available: AttrSet) -> (MvaScore, Vec<MvaScore>) {
    assert!(!available.is_empty(), "election needs at least one candidate");
    let schema = data.schema();
    let p = schema.len();
    let attrs: Vec<usize> = available.iter().filter(|&a| a < p).collect();
    let mut tables: Vec<Vec<u64>> = attrs.iter().map(|&a| vec![0u64; schema.cardinality(a)]).collect();
    let flat = data.flat_levels();
    for &r in rows {
        let rec = &flat[r as usize * p..(r as usize + 1) * p];
        for (t, &a) in tables.iter_mut().zip(&attrs) {
            t[rec[a] as usize] += 1;
        }
    }
    let scores: Vec<MvaScore> = attrs
        .iter()
        .zip(&tables)
        .map(|(&attribute, t)| MvaScore {
            attribute,
            delta_aic: aic_delta(t),
        })
        .collect();
    let mut best = scores[0];
    for s in &scores[1..] {
        if s.delta_aic < best.delta_aic {
            best = *s;
        }
    }
    (best, scores)
}

/// Builds the STEPS tree of height `plan.layers` with elected splits.
pub fn build_tree(data: &CategoricalDataset, plan: &SanitizationPlan) -> Result<PartitionTree, TreeError> {
    PartitionTree::build(data, plan.layers, SplitRule::Elect)
}

/// Random-partition baseline: the split attribute of layer `l` is the same
/// for every node and drawn uniformly without replacement.
pub fn random_partition_tree(
    data: &CategoricalDataset,
    plan: &SanitizationPlan,
    seed: u64,
) -> Result<PartitionTree, TreeError> {
    let order = random_attribute_order(data.schema().len(), plan.layers, seed)?;
    PartitionTree::build(data, plan.layers, SplitRule::Order(&order))
}

/// First `layers` entries of a seeded uniform permutation of `0..p`.
pub fn random_attribute_order(p: usize, layers: usize, seed: u64) -> Result<Vec<usize>, TreeError> {
    if layers > p {
        return Err(TreeError::TooManyLayers { layers, attributes: p });
    }
    let mut s = NoiseSource::new(seed, StreamId::root().tagged("random-partition")).stream();
    let mut attrs: Vec<usize> = (0..p).collect();
    for i in 0..layers {
        let j = i + s.below((p - i) as u64) as usize;
        attrs.swap(i, j);
    }
    attrs.truncate(layers);
    Ok(attrs)
}

/// Builds an elected tree of arbitrary height `0..=p` (height 0 is the root
/// over a single leaf block covering the whole table).
pub fn build_tree_with_height(data: &CategoricalDataset, layers: usize) -> Result<PartitionTree, TreeError> {
    PartitionTree::build(data, layers, SplitRule::Elect)
}

/// Pads every node to the schema's maximum cardinality `b` and every leaf
/// block to the widest block.
pub fn pad_phantoms(mut tree: PartitionTree) -> Result<PartitionTree, TreeError> {
    if tree.padded {
        return Err(TreeError::AlreadyPadded);
    }
    let b = tree.schema.max_cardinality();
    let width = tree.nodes.iter().filter_map(|n| n.leaf_block.as_ref()).map(LeafBlock::len).max().unwrap_or(0);
    for node in &mut tree.nodes {
        if node.layer < tree.layers {
            node.phantom_children = b - node.children.len();
        }
    }
    tree.branching = b;
    tree.leaf_width = width;
    tree.padded = true;
    Ok(tree)
}

impl PartitionTree {
    fn build(data: &CategoricalDataset, layers: usize, rule: SplitRule<'_>) -> Result<Self, TreeError> {
        let schema = data.schema().clone();
        let p = schema.len();
        if layers > p {
            return Err(TreeError::TooManyLayers { layers, attributes: p });
        }
        let flat = data.flat_levels();
        let mut nodes = vec![TreeNode {
            parent: None,
            condition: None,
            layer: 0,
            available: AttrSet::all(p),
            true_count: data.n() as u64,
            split: None,
            children: 0..0,
            phantom_children: 0,
            leaf_block: None,
        }];
        let mut layer_ranges = vec![0..1];
        let mut rows: Vec<Vec<u32>> = vec![(0..data.n() as u32).collect()];

        for layer in 0..layers {
            let range = layer_ranges[layer].clone();
            let splits: Vec<Split> = range
                .clone()
                .into_par_iter()
                .zip(rows.par_iter())
                .map(|(id, node_rows)| {
                    let available = nodes[id].available;
                    match rule {
                        SplitRule::Elect => {
                            let (best, candidates) = elect_mva(data, node_rows, available);
                            Split {
                                attribute: best.attribute,
                                candidates,
                            }
                        }
                        SplitRule::Order(order) => Split {
                            attribute: order[layer],
                            candidates: Vec::new(),
                        },
                    }
                })
                .collect();

            let start = nodes.len();
            let mut next_rows = Vec::new();
            for ((id, split), node_rows) in range.zip(splits).zip(rows) {
                let a = split.attribute;
                let k = schema.cardinality(a);
                let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); k];
                for r in node_rows {
                    buckets[flat[r as usize * p + a] as usize].push(r);
                }
                let first = nodes.len();
                let available = nodes[id].available.without(a);
                for (level, bucket) in buckets.into_iter().enumerate() {
                    nodes.push(TreeNode {
                        parent: Some(id),
                        condition: Some(Condition {
                            attribute: a,
                            level: level as u32,
                        }),
                        layer: layer + 1,
                        available,
                        true_count: bucket.len() as u64,
                        split: None,
                        children: 0..0,
                        phantom_children: 0,
                        leaf_block: None,
                    });
                    next_rows.push(bucket);
                }
                nodes[id].children = first..nodes.len();
                nodes[id].split = Some(split);
            }
            layer_ranges.push(start..nodes.len());
            rows = next_rows;
        }

        let last = layer_ranges[layers].clone();
        if layers < p {
            let blocks: Vec<LeafBlock> = last
                .clone()
                .into_par_iter()
                .zip(rows.par_iter())
                .map(|(id, node_rows)| {
                    let attributes: Vec<usize> = nodes[id].available.iter().filter(|&a| a < p).collect();
                    let cards: Vec<usize> = attributes.iter().map(|&a| schema.cardinality(a)).collect();
                    let size: usize = cards.iter().product();
                    let mut counts = vec![0u64; size];
                    for &r in node_rows {
                        let rec = &flat[r as usize * p..(r as usize + 1) * p];
                        let mut idx = 0usize;
                        for (&a, &k) in attributes.iter().zip(&cards) {
                            idx = idx * k + rec[a] as usize;
                        }
                        counts[idx] += 1;
                    }
                    LeafBlock { attributes, counts }
                })
                .collect();
            for (id, block) in last.zip(blocks) {
                nodes[id].leaf_block = Some(block);
            }
        }

        Ok(Self {
            schema,
            layers,
            nodes,
            layer_ranges,
            branching: 0,
            leaf_width: 0,
            padded: false,
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    /// Number of partition layers `L`.
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn layer(&self, l: usize) -> Range<NodeId> {
        self.layer_ranges[l].clone()
    }

    pub fn has_leaf_blocks(&self) -> bool {
        self.nodes[self.layer(self.layers).start].leaf_block.is_some()
    }

    pub fn is_padded(&self) -> bool {
        self.padded
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn leaf_width(&self) -> usize {
        self.leaf_width
    }

    /// Number of real leaf-block cells (equals `N` whenever `L < p`).
    pub fn leaf_cell_count(&self) -> usize {
        self.nodes.iter().filter_map(|n| n.leaf_block.as_ref()).map(LeafBlock::len).sum()
    }

    /// Conditions from the root down to `id`.
    pub fn path(&self, id: NodeId) -> Vec<Condition> {
        let mut path = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            if let Some(cond) = self.nodes[c].condition {
                path.push(cond);
            }
            cur = self.nodes[c].parent;
        }
        path.reverse();
        path
    }

    /// Full-table cell index of every cell of the leaf block under `id`, in
    /// block order; for a leaf node without a block, its single cell.
    pub fn leaf_full_indices(&self, id: NodeId) -> Vec<u64> {
        let strides = self.schema.strides();
        let base: u64 = self
            .path(id)
            .iter()
            .map(|c| u64::from(c.level) * strides[c.attribute])
            .sum();
        let Some(block) = &self.nodes[id].leaf_block else {
            return vec![base];
        };
        let cards: Vec<usize> = block.attributes.iter().map(|&a| self.schema.cardinality(a)).collect();
        let mut digits = vec![0usize; cards.len()];
        let mut out = Vec::with_capacity(block.len());
        for _ in 0..block.len() {
            let off: u64 = digits
                .iter()
                .zip(&block.attributes)
                .map(|(&d, &a)| d as u64 * strides[a])
                .sum();
            out.push(base + off);
            for pos in (0..digits.len()).rev() {
                digits[pos] += 1;
                if digits[pos] < cards[pos] {
                    break;
                }
                digits[pos] = 0;
            }
        }
        out
    }

    /// `(full-table cell, true count)` for every real leaf cell of the tree.
    pub fn leaf_cells(&self) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        for id in self.layer(self.layers) {
            let idx = self.leaf_full_indices(id);
            match &self.nodes[id].leaf_block {
                Some(b) => out.extend(idx.into_iter().zip(b.counts.iter().copied())),
                None => out.push((idx[0], self.nodes[id].true_count)),
            }
        }
        out
    }

    /// Checks the structural invariants: no attribute repeats on a path,
    /// children counts add up to their parent, the root holds every record.
    pub fn check_invariants(&self, n: usize) -> Result<(), String> {
        if self.nodes[0].true_count != n as u64 {
            return Err(format!("root count {} != n {}", self.nodes[0].true_count, n));
        }
        for (id, node) in self.nodes.iter().enumerate() {
            let path = self.path(id);
            let mut seen = AttrSet::default();
            for c in &path {
                if seen.contains(c.attribute) {
                    return Err(format!("attribute {} repeats on the path to node {id}", c.attribute));
                }
                seen = seen.with(c.attribute);
            }
            if let Some(block) = &node.leaf_block {
                if block.attributes.iter().any(|&a| seen.contains(a)) {
                    return Err(format!("leaf block of node {id} reuses a path attribute"));
                }
                let s: u64 = block.counts.iter().sum();
                if s != node.true_count {
                    return Err(format!("leaf block of node {id} sums to {s}, node has {}", node.true_count));
                }
            }
            if !node.children.is_empty() {
                let s: u64 = self.nodes[node.children.clone()].iter().map(|c| c.true_count).sum();
                if s != node.true_count {
                    return Err(format!("children of node {id} sum to {s}, node has {}", node.true_count));
                }
            }
            if self.padded && node.layer < self.layers && node.children.len() + node.phantom_children != self.branching {
                return Err(format!("node {id} has {} children after padding", node.children.len() + node.phantom_children));
            }
        }
        Ok(())
    }

    /// JSON audit of the partition layers. True counts are included only
    /// when `debug`; `noisy`/`consistent` are per-node values indexed by id.
    pub fn audit(&self, debug: bool, noisy: Option<&[f64]>, consistent: Option<&[f64]>) -> serde_json::Value {
        let names = self.schema.names();
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, node)| {
                let path: Vec<serde_json::Value> = self
                    .path(id)
                    .iter()
                    .map(|c| json!([names[c.attribute], self.schema.attribute(c.attribute).levels[c.level as usize]]))
                    .collect();
                let mut v = json!({
                    "id": id,
                    "layer": node.layer,
                    "path": path,
                    "phantom_children": node.phantom_children,
                });
                if let Some(split) = &node.split {
                    v["elected"] = json!(names[split.attribute]);
                    v["candidates"] = split
                        .candidates
                        .iter()
                        .map(|s| json!({"attribute": names[s.attribute], "delta_aic": finite_or_null(s.delta_aic)}))
                        .collect();
                }
                if let Some(block) = &node.leaf_block {
                    v["leaf_block"] = json!({
                        "attributes": block.attributes.iter().map(|&a| names[a]).collect::<Vec<_>>(),
                        "cells": block.len(),
                        "phantom_cells": self.leaf_width.saturating_sub(block.len()),
                    });
                }
                if debug {
                    v["true_count"] = json!(node.true_count);
                }
                if let Some(x) = noisy {
                    v["noisy_count"] = json!(x[id]);
                }
                if let Some(x) = consistent {
                    v["consistent_count"] = json!(x[id]);
                }
                v
            })
            .collect();
        json!({
            "layers": self.layers,
            "branching": self.branching,
            "leaf_width": self.leaf_width,
            "leaf_cells": self.leaf_cell_count(),
            "warning": ELECTION_WARNING,
            "nodes": nodes,
        })
    }
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{full_table, Attribute};
    use crate::dp::PrivacyBudget;
    use crate::plan::AllocationScheme;

    fn schema(cards: &[usize]) -> Arc<Schema> {
        let attrs = cards
            .iter()
            .enumerate()
            .map(|(j, &k)| Attribute::new(format!("a{j}"), (0..k).map(|l| l.to_string())))
            .collect();
        Arc::new(Schema::new(attrs).unwrap())
    }

    fn plan(s: &Schema, layers: usize) -> SanitizationPlan {
        SanitizationPlan::new(s, layers, AllocationScheme::Equal, 1, PrivacyBudget::new(1.0).unwrap(), 1).unwrap()
    }

    #[test]
    fn aic_examples() {
        assert!((aic_delta(&[5, 5]) - 2.0).abs() < 1e-12);
        let expect = -20.0 * std::f64::consts::LN_2 + 2.0;
        assert!((aic_delta(&[10, 0]) - expect).abs() < 1e-12);
        assert!((aic_delta(&[10, 0]) - (-11.862943611198906)).abs() < 1e-12);
        assert!(aic_delta(&[6, 3, 3]) < aic_delta(&[4, 4, 4]));
        assert_eq!(aic_delta(&[0, 0, 0]), f64::INFINITY);
    }

    #[test]
    fn election_picks_skewed_attribute() {
        let s = schema(&[2, 2]);
        // a0 split (5,5), a1 split (10,0)
        let rows: Vec<Vec<u32>> = (0..10).map(|i| vec![(i % 2) as u32, 0]).collect();
        let d = CategoricalDataset::new(s, rows).unwrap();
        let all: Vec<u32> = (0..10).collect();
        let (best, cands) = elect_mva(&d, &all, AttrSet::all(2));
        assert_eq!(best.attribute, 1);
        assert_eq!(cands.len(), 2);
    }

    #[test]
    fn uniform_and_empty_elections_tie_break_to_schema_order() {
        let s = schema(&[2, 2, 2]);
        let rows = vec![vec![0, 0, 0], vec![1, 1, 1]];
        let d = CategoricalDataset::new(s, rows).unwrap();
        let (best, _) = elect_mva(&d, &[0, 1], AttrSet::all(3).without(0));
        assert_eq!(best.attribute, 1);
        let (best, cands) = elect_mva(&d, &[], AttrSet::all(3));
        assert_eq!(best.attribute, 0);
        assert!(cands.iter().all(|c| c.delta_aic.is_infinite()));
    }

    #[test]
    fn two_binary_one_layer_structure() {
        let s = schema(&[2, 2]);
        let rows = vec![vec![0, 0], vec![0, 1], vec![1, 1], vec![0, 0]];
        let d = CategoricalDataset::new(s.clone(), rows).unwrap();
        let tree = pad_phantoms(build_tree(&d, &plan(&s, 1)).unwrap()).unwrap();
        assert_eq!(tree.layer(1).len(), 2);
        assert_eq!(tree.branching(), 2);
        assert_eq!(tree.leaf_width(), 2);
        for id in tree.layer(1) {
            assert_eq!(tree.node(id).leaf_block.as_ref().unwrap().len(), 2);
            assert_eq!(tree.node(id).phantom_children, 0);
        }
        tree.check_invariants(4).unwrap();
    }

    #[test]
    fn full_height_has_no_leaf_blocks() {
        let s = schema(&[2, 3]);
        let rows = vec![vec![0, 2], vec![1, 1], vec![1, 0]];
        let d = CategoricalDataset::new(s.clone(), rows).unwrap();
        let tree = build_tree(&d, &plan(&s, 2)).unwrap();
        assert!(!tree.has_leaf_blocks());
        assert_eq!(tree.layer(2).len(), 6);
        let mut cells = tree.leaf_cells();
        cells.sort();
        let full = full_table(&d).unwrap();
        let expect: Vec<(u64, u64)> = (0..6).map(|c| (c, full.get_index(c))).collect();
        assert_eq!(cells, expect);
    }

    #[test]
    fn padding_counts() {
        let s = schema(&[2, 14, 3]);
        let rows = vec![vec![0, 5, 1], vec![1, 5, 2], vec![1, 13, 0]];
        let d = CategoricalDataset::new(s.clone(), rows).unwrap();
        let tree = pad_phantoms(build_tree(&d, &plan(&s, 1)).unwrap()).unwrap();
        assert_eq!(tree.branching(), 14);
        let root = tree.node(0);
        assert_eq!(root.children.len() + root.phantom_children, 14);
        tree.check_invariants(3).unwrap();
        assert!(pad_phantoms(tree).is_err());

        let s = schema(&[3, 3]);
        let d = CategoricalDataset::new(s.clone(), vec![vec![0, 1]]).unwrap();
        let tree = pad_phantoms(build_tree(&d, &plan(&s, 1)).unwrap()).unwrap();
        assert_eq!(tree.node(0).phantom_children, 0);
    }

    #[test]
    fn random_order_is_deterministic() {
        let a = random_attribute_order(15, 2, 42).unwrap();
        let b = random_attribute_order(15, 2, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert!(random_attribute_order(3, 4, 0).is_err());
    }

    #[test]
    fn too_many_layers() {
        let s = schema(&[2, 2]);
        let d = CategoricalDataset::new(s, vec![vec![0, 0]]).unwrap();
        assert!(build_tree_with_height(&d, 3).is_err());
    }

    #[test]
    fn leaf_indices_cover_table() {
        let s = schema(&[2, 3, 2, 2]);
        let rows: Vec<Vec<u32>> = (0..30u32).map(|i| vec![i % 2, i % 3, (i / 3) % 2, (i / 7) % 2]).collect();
        let d = CategoricalDataset::new(s.clone(), rows).unwrap();
        let tree = build_tree(&d, &plan(&s, 2)).unwrap();
        tree.check_invariants(30).unwrap();
        let mut idx: Vec<u64> = tree.leaf_cells().into_iter().map(|(c, _)| c).collect();
        idx.sort();
        assert_eq!(idx, (0..24).collect::<Vec<_>>());
    }

    #[test]
    fn audit_hides_true_counts_outside_debug() {
        let s = schema(&[2, 2]);
        let d = CategoricalDataset::new(s.clone(), vec![vec![0, 1]]).unwrap();
        let tree = build_tree(&d, &plan(&s, 1)).unwrap();
        let a = tree.audit(false, None, None);
        assert!(a["nodes"][0].get("true_count").is_none());
        assert_eq!(a["warning"], ELECTION_WARNING);
        let a = tree.audit(true, None, None);
        assert_eq!(a["nodes"][0]["true_count"], 1);
    }
}
