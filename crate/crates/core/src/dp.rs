//! Laplace mechanism, keyed noise streams and privacy-budget accounting.
//!
//! Noise streams are counter-based: a stream is a ChaCha8 keystream whose key
//! is the SHA-256 digest of `(seed, stream path)`. Any two components that ask
//! for the same path get bit-identical draws regardless of scheduling, which
//! lets disjoint cell blocks be perturbed in parallel with serial-identical
//! output.

use std::collections::BTreeMap;
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Relative slack granted to floating-point budget sums.
pub const BUDGET_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpError {
    #[error("privacy budget must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("sensitivity must be positive and finite, got {0}")]
    InvalidSensitivity(f64),
    #[error("laplace scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("privacy budget exceeded: spending {requested} for {label:?} brings the total to {total}, above the cap {cap}")]
    BudgetExceeded {
        label: String,
        requested: f64,
        total: f64,
        cap: f64,
    },
}

/// Privacy-loss parameter `ε`.
///
/// `ε = ∞` is the no-noise sentinel: every mechanism releases its input
/// unchanged. It exists for zero-noise oracles and is never a private release.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self, DpError> {
        if epsilon > 0.0 && epsilon.is_finite() {
            Ok(Self(epsilon))
        } else {
            Err(DpError::InvalidEpsilon(epsilon))
        }
    }

    pub const fn no_noise() -> Self {
        Self(f64::INFINITY)
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }

    pub fn is_no_noise(self) -> bool {
        self.0.is_infinite()
    }

    /// The fraction `share` of this budget (`share` in (0, 1]).
    pub fn fraction(self, share: f64) -> Self {
        Self(self.0 * share)
    }
}

impl fmt::Display for PrivacyBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_no_noise() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// ℓ₁ global sensitivity of a released count vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sensitivity(f64);

impl Sensitivity {
    /// A disjoint histogram: one record moves one cell by one.
    pub const HISTOGRAM: Sensitivity = Sensitivity(1.0);

    pub fn new(delta1: f64) -> Result<Self, DpError> {
        if delta1 > 0.0 && delta1.is_finite() {
            Ok(Self(delta1))
        } else {
            Err(DpError::InvalidSensitivity(delta1))
        }
    }

    pub fn delta1(self) -> f64 {
        self.0
    }
}

/// Laplace scale `Δ₁/ε`; zero under the no-noise sentinel.
pub fn laplace_scale(sensitivity: Sensitivity, budget: PrivacyBudget) -> f64 {
    if budget.is_no_noise() {
        0.0
    } else {
        sensitivity.0 / budget.0
    }
}

/// Hierarchical identifier of a noise stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct StreamId(Vec<u64>);

impl StreamId {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn child(&self, component: u64) -> Self {
        let mut path = self.0.clone();
        path.push(component);
        Self(path)
    }

    /// Child component derived from a static tag, for readable call sites.
    pub fn tagged(&self, tag: &str) -> Self {
        let digest = Sha256::digest(tag.as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        self.child(u64::from_le_bytes(b))
    }

    pub fn components(&self) -> &[u64] {
        &self.0
    }
}

/// Noise source identity: a run seed plus a stream path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub seed: u64,
    pub stream: StreamId,
}

impl NoiseSource {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        Self { seed, stream }
    }

    pub fn child(&self, component: u64) -> Self {
        Self::new(self.seed, self.stream.child(component))
    }

    pub fn tagged(&self, tag: &str) -> Self {
        Self::new(self.seed, self.stream.tagged(tag))
    }

    /// Opens the keystream; repeated calls restart it from the beginning.
    pub fn stream(&self) -> NoiseStream {
        let mut h = Sha256::new();
        h.update(b"steps-dp/noise/v1");
        h.update(self.seed.to_le_bytes());
        h.update((self.stream.0.len() as u64).to_le_bytes());
        for c in &self.stream.0 {
            h.update(c.to_le_bytes());
        }
        let mut key = [0u8; 32];
        key.copy_from_slice(&h.finalize());
        NoiseStream {
            rng: ChaCha8Rng::from_seed(key),
        }
    }
}

/// Sequential reader over one keyed stream.
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval (-1/2, 1/2).
    pub fn centered_uniform(&mut self) -> f64 {
        self.uniform() - 0.5
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        // Lemire's nearly divisionless method
        let mut m = u128::from(self.rng.next_u64()) * u128::from(bound);
        if (m as u64) < bound {
            let threshold = bound.wrapping_neg() % bound;
            while (m as u64) < threshold {
                m = u128::from(self.rng.next_u64()) * u128::from(bound);
            }
        }
        (m >> 64) as u64
    }

    /// One Lap(0, scale) draw.
    pub fn laplace(&mut self, scale: f64) -> f64 {
        laplace_from_uniform(scale, self.centered_uniform())
    }
}

impl RngCore for NoiseStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst);
    }
}

/// Inverse-CDF transform of `u ∈ (-1/2, 1/2)` to Lap(0, scale):
/// `x = -scale · sign(u) · ln(1 - 2|u|)`.
pub fn laplace_from_uniform(scale: f64, u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    -scale * u.signum() * (-2.0 * u.abs()).ln_1p()
}

/// Lap(0, scale) cumulative distribution function.
pub fn laplace_cdf(scale: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

pub fn laplace_sample(scale: f64, stream: &mut NoiseStream) -> Result<f64, DpError> {
    if scale > 0.0 && scale.is_finite() {
        Ok(stream.laplace(scale))
    } else {
        Err(DpError::InvalidScale(scale))
    }
}

/// Adds i.i.d. Lap(0, scale) noise in place (no-op for scale 0).
pub fn perturb_in_place(values: &mut [f64], scale: f64, src: &NoiseSource) {
    if scale == 0.0 {
        return;
    }
    let mut s = src.stream();
    for v in values {
        *v += s.laplace(scale);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "group")]
pub enum Composition {
    Sequential,
    /// Releases on disjoint data; the group costs its maximum entry.
    Parallel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub epsilon: f64,
    pub composition: Composition,
    /// Number of released cells covered by the entry.
    pub cells: u64,
}

/// Append-only record of budget spends against a cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    cap: f64,
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new(cap: PrivacyBudget) -> Self {
        Self {
            cap: cap.epsilon(),
            entries: Vec::new(),
        }
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Sequential spends plus the maximum of each parallel group.
    pub fn total(&self) -> f64 {
        total_of(&self.entries)
    }

    pub fn remaining(&self) -> f64 {
        self.cap - self.total()
    }

    /// Records a spend, refusing it if the new total would exceed the cap.
    pub fn charge(
        &mut self,
        label: impl Into<String>,
        epsilon: f64,
        composition: Composition,
        cells: u64,
    ) -> Result<(), DpError> {
        let label = label.into();
        if !(epsilon > 0.0) {
            return Err(DpError::InvalidEpsilon(epsilon));
        }
        let entry = LedgerEntry {
            label,
            epsilon,
            composition,
            cells,
        };
        self.entries.push(entry);
        let total = self.total();
        if total > self.cap * (1.0 + BUDGET_TOLERANCE) {
            let e = self.entries.pop().expect("just pushed");
            return Err(DpError::BudgetExceeded {
                label: e.label,
                requested: e.epsilon,
                total,
                cap: self.cap,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.entries).expect("ledger serializes")
    }
}

/// Total cost of a set of entries, independent of their order.
pub fn total_of(entries: &[LedgerEntry]) -> f64 {
    let mut sequential: Vec<f64> = Vec::new();
    let mut groups: BTreeMap<&str, f64> = BTreeMap::new();
    for e in entries {
        match &e.composition {
            Composition::Sequential => sequential.push(e.epsilon),
            Composition::Parallel(g) => {
                let m = groups.entry(g.as_str()).or_insert(0.0);
                *m = m.max(e.epsilon);
            }
        }
    }
    sequential.extend(groups.into_values());
    // sort so the floating-point sum does not depend on entry order
    sequential.sort_by(f64::total_cmp);
    sequential.iter().sum()
}

/// Laplace-sanitizes `counts` and charges the spend to `ledger`.
///
/// The charge happens before any noise is drawn, so a refused spend emits
/// nothing.
pub fn sanitize_counts(
    counts: &[f64],
    sensitivity: Sensitivity,
    budget: PrivacyBudget,
    ledger: &mut BudgetLedger,
    label: &str,
    composition: Composition,
    src: &NoiseSource,
) -> Result<Vec<f64>, DpError> {
    ledger.charge(label, budget.epsilon(), composition, counts.len() as u64)?;
    let mut out = counts.to_vec();
    perturb_in_place(&mut out, laplace_scale(sensitivity, budget), src);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(seed: u64) -> NoiseSource {
        NoiseSource::new(seed, StreamId::root().child(3).child(9))
    }

    #[test]
    fn forced_zero_uniform_is_median() {
        assert_eq!(laplace_from_uniform(1.0, 0.0), 0.0);
    }

    #[test]
    fn inverse_cdf_round_trip() {
        for &u in &[-0.49, -0.2, -1e-9, 1e-9, 0.1, 0.3, 0.4999] {
            let x = laplace_from_uniform(2.5, u);
            assert!((laplace_cdf(2.5, x) - (u + 0.5)).abs() < 1e-12, "u={u}");
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = {
            let mut s = src(7).stream();
            (0..16).map(|_| s.laplace(1.0)).collect()
        };
        let b: Vec<f64> = {
            let mut s = src(7).stream();
            (0..16).map(|_| s.laplace(1.0)).collect()
        };
        assert_eq!(a, b);
        let mut other = src(8).stream();
        assert_ne!(a[0], other.laplace(1.0));
        let mut sibling = NoiseSource::new(7, StreamId::root().child(3).child(10)).stream();
        assert_ne!(a[0], sibling.laplace(1.0));
    }

    #[test]
    fn uniform_stays_open() {
        let mut s = src(1).stream();
        for _ in 0..10_000 {
            let u = s.centered_uniform();
            assert!(u > -0.5 && u < 0.5);
        }
    }

    #[test]
    fn below_is_in_range() {
        let mut s = src(2).stream();
        let mut hits = [0u32; 5];
        for _ in 0..5000 {
            hits[s.below(5) as usize] += 1;
        }
        assert!(hits.iter().all(|&h| h > 850 && h < 1150), "{hits:?}");
    }

    #[test]
    fn non_positive_scale_rejected() {
        let mut s = src(1).stream();
        assert!(laplace_sample(0.0, &mut s).is_err());
        assert!(laplace_sample(-1.0, &mut s).is_err());
        assert!(laplace_sample(1.0, &mut s).is_ok());
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0).is_err());
        assert!(PrivacyBudget::new(-1.0).is_err());
        assert!(PrivacyBudget::new(f64::INFINITY).is_err());
        assert!(PrivacyBudget::no_noise().is_no_noise());
        assert!(Sensitivity::new(0.0).is_err());
    }

    #[test]
    fn ledger_totals() {
        let cap = PrivacyBudget::new(10.0).unwrap();
        let mut l = BudgetLedger::new(cap);
        l.charge("a", 0.3, Composition::Sequential, 1).unwrap();
        l.charge("b", 0.2, Composition::Sequential, 1).unwrap();
        assert!((l.total() - 0.5).abs() < 1e-15);

        let mut l = BudgetLedger::new(cap);
        for i in 0..3 {
            l.charge(format!("bin{i}"), 0.3, Composition::Parallel("g".into()), 1).unwrap();
        }
        assert!((l.total() - 0.3).abs() < 1e-15);

        let mut l = BudgetLedger::new(cap);
        l.charge("s", 0.2, Composition::Sequential, 1).unwrap();
        l.charge("p1", 0.1, Composition::Parallel("g".into()), 1).unwrap();
        l.charge("p2", 0.4, Composition::Parallel("g".into()), 1).unwrap();
        assert!((l.total() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ledger_refuses_overspend_without_recording() {
        let mut l = BudgetLedger::new(PrivacyBudget::new(1.0).unwrap());
        l.charge("a", 0.7, Composition::Sequential, 1).unwrap();
        let err = l.charge("b", 0.4, Composition::Sequential, 1).unwrap_err();
        assert!(matches!(err, DpError::BudgetExceeded { .. }));
        assert_eq!(l.entries().len(), 1);
        // a bigger parallel sibling is still an overspend
        l.charge("p", 0.2, Composition::Parallel("g".into()), 1).unwrap();
        assert!(l.charge("q", 0.35, Composition::Parallel("g".into()), 1).is_err());
        assert!((l.total() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn no_noise_sanitize_is_identity() {
        let mut l = BudgetLedger::new(PrivacyBudget::no_noise());
        let out = sanitize_counts(
            &[5.0, 3.0],
            Sensitivity::HISTOGRAM,
            PrivacyBudget::no_noise(),
            &mut l,
            "t",
            Composition::Sequential,
            &src(1),
        )
        .unwrap();
        assert_eq!(out, vec![5.0, 3.0]);
    }

    #[test]
    fn sanitize_refused_spend_emits_nothing() {
        let mut l = BudgetLedger::new(PrivacyBudget::new(0.5).unwrap());
        let r = sanitize_counts(
            &[1.0],
            Sensitivity::HISTOGRAM,
            PrivacyBudget::new(1.0).unwrap(),
            &mut l,
            "t",
            Composition::Sequential,
            &src(1),
        );
        assert!(r.is_err());
        assert!(l.entries().is_empty());
    }

    #[test]
    fn ledger_json_has_labels() {
        let mut l = BudgetLedger::new(PrivacyBudget::new(1.0).unwrap());
        l.charge("layer-1", 0.5, Composition::Parallel("r0/l1".into()), 14).unwrap();
        let j = l.to_json();
        assert_eq!(j[0]["label"], "layer-1");
        assert_eq!(j[0]["composition"]["kind"], "parallel");
        assert_eq!(j[0]["composition"]["group"], "r0/l1");
    }
}
