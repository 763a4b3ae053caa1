//! Hierarchical consistency post-processing (universal histogram).
//!
//! Given noisy counts on a tree whose nodes at the same depth all have the
//! same number of children, a bottom-up pass forms the minimum-variance
//! subtree estimate `z` of every node and a top-down pass spreads each
//! parent's residual evenly over its children. For constant branching `b`
//! the bottom-up weight of a node whose subtree has height `h` (leaves have
//! `h = 1`) is
//!
//! ```text
//! z(v) = (b^h − b^(h−1))/(b^h − 1) · n*(v) + (b^(h−1) − 1)/(b^h − 1) · Σ z(children)
//! ```
//!
//! and the released counts are
//!
//! ```text
//! n̄(root) = z(root),   n̄(v) = z(v) + (n̄(u) − Σ_{w ∈ succ(u)} z(w)) / b
//! ```
//!
//! which is the least-squares fit under parent-equals-sum-of-children
//! constraints. The weights here come from the inverse-variance recursion,
//! which reduces to the closed form above for constant `b` and stays exact
//! when the branching differs between depths.
//!
//! Children beyond a node's explicit ones are implicit phantoms: zero
//! observations with zero subtrees. They enter the sums as zeros and absorb
//! their share of every residual.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

/// Largest materialized tree the direct least-squares oracle accepts.
pub const ORACLE_NODE_LIMIT: usize = 10_000;

const PAR_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyError {
    #[error("node {0} sits above the leaf depth but has no children")]
    NonUniformDepth(usize),
    #[error("node {node} has {children} children, its depth allows {branching}")]
    TooManyChildren { node: usize, children: usize, branching: usize },
    #[error("level children must reference parents of the previous depth in order")]
    UnorderedParents,
    #[error("branching factor must be at least 1")]
    ZeroBranching,
    #[error("tree has {0} nodes, above the oracle limit of {ORACLE_NODE_LIMIT}")]
    TooLargeForOracle(usize),
    #[error("constraint system is singular")]
    Singular,
}

/// How the root count enters the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootMode {
    /// The root carries a noisy observation like every other node.
    Observed,
    /// The root count is public and exact; it is a hard constraint.
    Fixed(f64),
}

/// Tree of noisy counts in breadth-first layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    values: Vec<f64>,
    first_child: Vec<usize>,
    child_count: Vec<usize>,
    parent: Vec<usize>,
    depths: Vec<Range<usize>>,
    branching: Vec<usize>,
}

impl Hierarchy {
    pub fn new(root_value: f64) -> Self {
        Self {
            values: vec![root_value],
            first_child: vec![0],
            child_count: vec![0],
            parent: vec![usize::MAX],
            depths: vec![0..1],
            branching: Vec::new(),
        }
    }

    /// Appends the next depth. `nodes` lists `(parent id, noisy value)` with
    /// parents from the current deepest level in non-decreasing order; every
    /// parent has `branching` children in total, the unlisted ones phantom.
    pub fn push_level(
        &mut self,
        branching: usize,
        nodes: impl IntoIterator<Item = (usize, f64)>,
    ) -> Result<Range<usize>, ConsistencyError> {
        if branching == 0 {
            return Err(ConsistencyError::ZeroBranching);
        }
        let parents = self.depths.last().expect("root level").clone();
        let start = self.values.len();
        let mut last_parent = parents.start;
        for (parent, value) in nodes {
            if !parents.contains(&parent) || parent < last_parent {
                return Err(ConsistencyError::UnorderedParents);
            }
            if self.child_count[parent] == 0 {
                self.first_child[parent] = self.values.len();
            }
            self.child_count[parent] += 1;
            if self.child_count[parent] > branching {
                return Err(ConsistencyError::TooManyChildren {
                    node: parent,
                    children: self.child_count[parent],
                    branching,
                });
            }
            last_parent = parent;
            self.values.push(value);
            self.first_child.push(0);
            self.child_count.push(0);
            self.parent.push(parent);
        }
        let range = start..self.values.len();
        self.depths.push(range.clone());
        self.branching.push(branching);
        Ok(range)
    }

    /// Complete `b`-ary tree with `height` levels below the root; `values`
    /// in breadth-first order.
    pub fn complete(b: usize, height: usize, values: &[f64]) -> Result<Self, ConsistencyError> {
        let mut h = Hierarchy::new(values[0]);
        let mut next = 1;
        for _ in 0..height {
            let parents = h.depths.last().unwrap().clone();
            let level: Vec<(usize, f64)> = parents
                .flat_map(|p| std::iter::repeat_n(p, b))
                .map(|p| {
                    let v = values[next];
                    next += 1;
                    (p, v)
                })
                .collect();
            h.push_level(b, level)?;
        }
        Ok(h)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of levels below the root.
    pub fn height(&self) -> usize {
        self.depths.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn depth(&self, d: usize) -> Range<usize> {
        self.depths[d].clone()
    }

    /// Total children (explicit plus phantom) of nodes at depth `d`.
    pub fn branching(&self, d: usize) -> usize {
        self.branching[d]
    }

    pub fn children(&self, id: usize) -> Range<usize> {
        self.first_child[id]..self.first_child[id] + self.child_count[id]
    }

    pub fn phantom_children(&self, id: usize, d: usize) -> usize {
        self.branching[d] - self.child_count[id]
    }

    /// Every explicit node above the leaf depth must have an explicit child.
    pub fn validate(&self) -> Result<(), ConsistencyError> {
        for d in 0..self.height() {
            for id in self.depth(d) {
                if self.child_count[id] == 0 {
                    return Err(ConsistencyError::NonUniformDepth(id));
                }
            }
        }
        Ok(())
    }

    /// Bottom-up weight on a node's own observation, per depth.
    pub fn own_weights(&self) -> Vec<f64> {
        let h = self.height();
        let mut alpha = vec![1.0; h + 1];
        let mut var = 1.0;
        for d in (0..h).rev() {
            let children_var = self.branching[d] as f64 * var;
            alpha[d] = children_var / (1.0 + children_var);
            var = alpha[d];
        }
        alpha
    }
}

/// Closed-form own-observation weight for constant branching `b` at subtree
/// height `h` (leaves have `h = 1`).
pub fn uniform_weight(b: usize, h: u32) -> f64 {
    let b = b as f64;
    let bh = b.powi(h as i32);
    let bh1 = b.powi(h as i32 - 1);
    if h == 1 {
        1.0
    } else {
        (bh - bh1) / (bh - 1.0)
    }
}

/// Bottom-up estimates `z`.
pub fn bottom_up(tree: &Hierarchy) -> Result<Vec<f64>, ConsistencyError> {
    bottom_up_values(tree, &tree.values)
}

/// [`bottom_up`] with the observations supplied separately from the
/// tree's own values.
pub fn bottom_up_values(tree: &Hierarchy, values: &[f64]) -> Result<Vec<f64>, ConsistencyError> {
    assert_eq!(values.len(), tree.len());
    tree.validate()?;
    let alpha = tree.own_weights();
    let mut z = values.to_vec();
    for d in (0..tree.height()).rev() {
        let range = tree.depth(d);
        let a = alpha[d];
        let (upper, lower) = z.split_at_mut(range.end);
        let offset = range.end;
        let f = |(id, zv): (usize, &mut f64)| {
            let kids = tree.children(id);
            let s: f64 = lower[kids.start - offset..kids.end - offset].iter().sum();
            *zv = a * values[id] + (1.0 - a) * s;
        };
        let slot = &mut upper[range.clone()];
        if slot.len() >= PAR_THRESHOLD {
            slot.par_iter_mut().enumerate().map(|(i, v)| (range.start + i, v)).for_each(f);
        } else {
            slot.iter_mut().enumerate().map(|(i, v)| (range.start + i, v)).for_each(f);
        }
    }
    Ok(z)
}

/// Released counts from the bottom-up estimates.
pub fn top_down(tree: &Hierarchy, z: &[f64], root: RootMode) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    out[0] = match root {
        RootMode::Observed => z[0],
        RootMode::Fixed(n) => n,
    };
    for d in 0..tree.height() {
        let range = tree.depth(d);
        let b = tree.branching(d) as f64;
        let (upper, lower) = out.split_at_mut(range.end);
        let parents = &upper[range.clone()];
        let residual_of = |(i, released): (usize, &f64)| {
            let s: f64 = z[tree.children(range.start + i)].iter().sum();
            (released - s) / b
        };
        let residuals: Vec<f64> = if parents.len() >= PAR_THRESHOLD {
            parents.par_iter().enumerate().map(residual_of).collect()
        } else {
            parents.iter().enumerate().map(residual_of).collect()
        };
        // children of depth-d nodes fill depth d+1 contiguously
        let offset = range.end;
        let children = &mut lower[..tree.depth(d + 1).len()];
        let fill = |(i, v): (usize, &mut f64)| {
            let w = offset + i;
            *v = z[w] + residuals[tree.parent[w] - range.start];
        };
        if children.len() >= PAR_THRESHOLD {
            children.par_iter_mut().enumerate().for_each(fill);
        } else {
            children.iter_mut().enumerate().for_each(fill);
        }
    }
    out
}

/// Output of the two-pass fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistentCounts {
    pub z: Vec<f64>,
    pub released: Vec<f64>,
    /// Released mass that landed on implicit phantom children.
    pub phantom_mass: f64,
}

/// Bottom-up then top-down.
pub fn enforce(tree: &Hierarchy, root: RootMode) -> Result<ConsistentCounts, ConsistencyError> {
    enforce_values(tree, &tree.values, root)
}

/// [`enforce`] on observations supplied separately.
pub fn enforce_values(tree: &Hierarchy, values: &[f64], root: RootMode) -> Result<ConsistentCounts, ConsistencyError> {
    let z = bottom_up_values(tree, values)?;
    let released = top_down(tree, &z, root);
    let mut phantom_mass = 0.0;
    for d in 0..tree.height() {
        let b = tree.branching(d);
        for id in tree.depth(d) {
            let phantoms = tree.phantom_children(id, d);
            if phantoms > 0 {
                let s: f64 = tree.children(id).map(|w| released[w]).sum();
                phantom_mass += released[id] - s;
            }
        }
        let _ = b;
    }
    Ok(ConsistentCounts {
        z,
        released,
        phantom_mass,
    })
}

/// Largest `|parent − Σ children|` over explicit nodes without phantoms,
/// scaled by `1 + |parent|`.
pub fn max_constraint_residual(tree: &Hierarchy, released: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for d in 0..tree.height() {
        for id in tree.depth(d) {
            if tree.phantom_children(id, d) == 0 {
                let s: f64 = tree.children(id).map(|w| released[w]).sum();
                worst = worst.max((released[id] - s).abs() / (1.0 + released[id].abs()));
            }
        }
    }
    worst
}

/// Direct constrained least squares: minimizes `Σ (c_v − n*_v)²` subject to
/// every parent equalling the sum of its children, with phantoms
/// materialized as zero observations. Solves the reduced KKT system
/// `(D Dᵀ) μ = D n* − d`, `c = n* − Dᵀ μ`. Returns values of explicit nodes.
pub fn ls_oracle(tree: &Hierarchy, root: RootMode) -> Result<Vec<f64>, ConsistencyError> {
    tree.validate()?;
    // materialize: explicit nodes keep their ids, phantoms are appended
    let mut values = tree.values.clone();
    let mut depth_of = vec![0usize; tree.len()];
    for d in 0..=tree.height() {
        for id in tree.depth(d) {
            depth_of[id] = d;
        }
    }
    let mut children: Vec<Vec<usize>> = (0..tree.len()).map(|id| tree.children(id).collect()).collect();
    let mut stack: Vec<usize> = (0..tree.len()).collect();
    while let Some(id) = stack.pop() {
        let d = depth_of[id];
        if d == tree.height() {
            continue;
        }
        let missing = tree.branching(d) - children[id].len();
        for _ in 0..missing {
            let new = values.len();
            values.push(0.0);
            depth_of.push(d + 1);
            children.push(Vec::new());
            children[id].push(new);
            stack.push(new);
            if values.len() > ORACLE_NODE_LIMIT {
                return Err(ConsistencyError::TooLargeForOracle(values.len()));
            }
        }
    }

    let internal: Vec<usize> = (0..values.len()).filter(|&v| !children[v].is_empty()).collect();
    let fixed = matches!(root, RootMode::Fixed(_));
    let rows = internal.len() + usize::from(fixed);
    let mut row_of = vec![usize::MAX; values.len()];
    for (r, &u) in internal.iter().enumerate() {
        row_of[u] = r;
    }
    // constraint rows: e_u − Σ e_children = 0, plus e_root = n when fixed
    let mut ddt = DMatrix::<f64>::zeros(rows, rows);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (r, &u) in internal.iter().enumerate() {
        ddt[(r, r)] = 1.0 + children[u].len() as f64;
        for &w in &children[u] {
            if row_of[w] != usize::MAX {
                ddt[(r, row_of[w])] = -1.0;
                ddt[(row_of[w], r)] = -1.0;
            }
        }
        rhs[r] = values[u] - children[u].iter().map(|&w| values[w]).sum::<f64>();
    }
    if let RootMode::Fixed(n) = root {
        let r = rows - 1;
        ddt[(r, r)] = 1.0;
        if row_of[0] != usize::MAX {
            ddt[(r, row_of[0])] = 1.0;
            ddt[(row_of[0], r)] = 1.0;
        }
        rhs[r] = values[0] - n;
    }
    let mu = ddt.lu().solve(&rhs).ok_or(ConsistencyError::Singular)?;
    let mut c = values.clone();
    for (r, &u) in internal.iter().enumerate() {
        c[u] -= mu[r];
        for &w in &children[u] {
            c[w] += mu[r];
        }
    }
    if fixed {
        c[0] -= mu[rows - 1];
    }
    c.truncate(tree.len());
    Ok(c)
}
