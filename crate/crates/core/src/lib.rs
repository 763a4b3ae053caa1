//! Differentially private synthetic data for categorical datasets via
//! noisy partition trees, plus propensity-score utility analytics.

pub mod consistency;
pub mod dataset;
pub mod dp;
pub mod mock;
pub mod plan;
pub mod specks;
pub mod stats;
pub mod synth;
pub mod tree;
pub mod utility;

pub use dataset::{Attribute, CategoricalDataset, ContingencyTable, Schema};
pub use dp::{BudgetLedger, NoiseSource, PrivacyBudget};
pub use plan::{AllocationScheme, SanitizationPlan};
pub use tree::PartitionTree;
