//! Sanitization plans: tree height, per-layer budget shares, replicate count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Schema;
use crate::dp::{PrivacyBudget, BUDGET_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("tree height L={layers} must satisfy 1 <= L <= p={attributes}")]
    LayersOutOfRange { layers: usize, attributes: usize },
    #[error("at least one synthetic replicate is required")]
    NoReplicates,
    #[error("allocation has {found} shares, the tree has {expected} sanitized layers")]
    AllocationLength { expected: usize, found: usize },
    #[error("allocation share {index} is {value}, shares must be positive")]
    NonPositiveShare { index: usize, value: f64 },
    #[error("allocation shares sum to {0}, which overspends the budget")]
    Overspend(f64),
    #[error("allocation shares sum to {0}, shares must sum to 1")]
    Underspend(f64),
}

impl PlanError {
    /// True for errors that would spend more budget than configured.
    pub fn is_budget_violation(&self) -> bool {
        matches!(self, PlanError::Overspend(_))
    }
}

/// How a replicate's budget is split across the sanitized layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "scheme", content = "shares")]
pub enum AllocationScheme {
    /// `1/(L+1)` per layer (or `1/L` without a cross-tabulation layer).
    Equal,
    /// Half to the cross-tabulation layer `L+1`, half split evenly over
    /// the `L` partition layers. Falls back to [`AllocationScheme::Equal`]
    /// when `L = p`, where there is no cross-tabulation layer.
    HalfSplit,
    Custom(Vec<f64>),
}

impl AllocationScheme {
    /// Budget shares `c_1..c_S` for `sanitized_layers = S` layers, where the
    /// last layer is the cross-tabulation block when `has_leaf_block`.
    pub fn shares(&self, layers: usize, has_leaf_block: bool) -> Result<Vec<f64>, PlanError> {
        let sanitized = layers + usize::from(has_leaf_block);
        let shares = match self {
            AllocationScheme::Equal => vec![1.0 / sanitized as f64; sanitized],
            AllocationScheme::HalfSplit if has_leaf_block => {
                let mut v = vec![0.5 / layers as f64; layers];
                v.push(0.5);
                v
            }
            AllocationScheme::HalfSplit => vec![1.0 / layers as f64; layers],
            AllocationScheme::Custom(v) => v.clone(),
        };
        if shares.len() != sanitized {
            return Err(PlanError::AllocationLength {
                expected: sanitized,
                found: shares.len(),
            });
        }
        for (index, &value) in shares.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(PlanError::NonPositiveShare { index, value });
            }
        }
        let sum: f64 = shares.iter().sum();
        if sum > 1.0 + BUDGET_TOLERANCE {
            return Err(PlanError::Overspend(sum));
        }
        if sum < 1.0 - BUDGET_TOLERANCE {
            return Err(PlanError::Underspend(sum));
        }
        Ok(shares)
    }
}

/// Everything a tree-based synthesis run consumes besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizationPlan {
    pub layers: usize,
    pub scheme: AllocationScheme,
    /// Resolved shares `c_1..c_L` plus `c_{L+1}` when `L < p`.
    pub shares: Vec<f64>,
    pub replicates: usize,
    pub epsilon: PrivacyBudget,
    pub seed: u64,
}

impl SanitizationPlan {
    pub fn new(
        schema: &Schema,
        layers: usize,
        scheme: AllocationScheme,
        replicates: usize,
        epsilon: PrivacyBudget,
        seed: u64,
    ) -> Result<Self, PlanError> {
        let p = schema.len();
        if layers == 0 || layers > p {
            return Err(PlanError::LayersOutOfRange {
                layers,
                attributes: p,
            });
        }
        if replicates == 0 {
            return Err(PlanError::NoReplicates);
        }
        let shares = scheme.shares(layers, layers < p)?;
        Ok(Self {
            layers,
            scheme,
            shares,
            replicates,
            epsilon,
            seed,
        })
    }

    pub fn has_leaf_block(&self) -> bool {
        self.shares.len() > self.layers
    }

    /// Budget of one replicate, `ε/m`.
    pub fn per_replicate(&self) -> PrivacyBudget {
        self.epsilon.fraction(1.0 / self.replicates as f64)
    }

    /// Budget of sanitized layer `l` (1-based) within one replicate, `c_l·ε/m`.
    pub fn layer_budget(&self, layer: usize) -> PrivacyBudget {
        self.per_replicate().fraction(self.shares[layer - 1])
    }
}
