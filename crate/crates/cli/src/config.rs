//! Run configuration: JSON files, flag overrides and the canonical echo
//! written to manifests.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use steps_core::dp::PrivacyBudget;
use steps_core::plan::AllocationScheme;
use steps_core::synth::{Emission, Method, PostProcess, SynthesisOptions};
use steps_core::utility::DEFAULT_ALPHAS;

use crate::error::CliError;

/// A privacy budget as written on the command line: a number, `inf`, or
/// a power of e (`e`, `e2`, `e-1`, `e^0.5`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon(pub f64);

impl Epsilon {
    pub fn budget(self, unsafe_no_noise: bool) -> Result<PrivacyBudget, CliError> {
        if self.0 == f64::INFINITY {
            if !unsafe_no_noise {
                return Err(CliError::config(
                    "epsilon=inf disables all noise; pass --unsafe-no-noise to confirm",
                ));
            }
            return Ok(PrivacyBudget::no_noise());
        }
        PrivacyBudget::new(self.0).map_err(|_| CliError::config(format!("epsilon must be positive and finite, got {}", self.0)))
    }

    /// `e^k` for integral `k`, otherwise the number.
    pub fn label(self) -> String {
        let k = self.0.ln();
        if self.0.is_finite() && (k - k.round()).abs() < 1e-12 && k.round().exp() == self.0 {
            match k.round() as i64 {
                0 => "1".into(),
                1 => "e".into(),
                k => format!("e^{k}"),
            }
        } else {
            format!("{}", self.0)
        }
    }
}

impl FromStr for Epsilon {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Ok(v) = s.parse::<f64>() {
            return Ok(Epsilon(v));
        }
        if let Some(rest) = s.strip_prefix('e') {
            let rest = rest.strip_prefix('^').unwrap_or(rest);
            if rest.is_empty() {
                return Ok(Epsilon(1f64.exp()));
            }
            if let Ok(k) = rest.parse::<f64>() {
                return Ok(Epsilon(k.exp()));
            }
        }
        Err(format!("cannot parse epsilon {s:?} (use a number, inf, e, e2, e-1)"))
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(if self.0 > 0.0 { "inf" } else { "-inf" })
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(Epsilon(v)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Budget allocation as configured: `equal`, `half-split`, or explicit
/// shares.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation(pub AllocationScheme);

impl Default for Allocation {
    fn default() -> Self {
        Allocation(AllocationScheme::HalfSplit)
    }
}

impl FromStr for Allocation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "equal" => Ok(Allocation(AllocationScheme::Equal)),
            "half-split" => Ok(Allocation(AllocationScheme::HalfSplit)),
            other => other
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map(|v| Allocation(AllocationScheme::Custom(v)))
                .map_err(|_| format!("allocation {other:?} is not equal, half-split or a comma list of shares")),
        }
    }
}

impl Serialize for Allocation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match &self.0 {
            AllocationScheme::Equal => s.serialize_str("equal"),
            AllocationScheme::HalfSplit => s.serialize_str("half-split"),
            AllocationScheme::Custom(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Allocation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Shares(Vec<f64>),
        }
        match Repr::deserialize(d)? {
            Repr::Name(n) => n.parse().map_err(serde::de::Error::custom),
            Repr::Shares(v) => Ok(Allocation(AllocationScheme::Custom(v))),
        }
    }
}

/// Which utility metrics to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Metrics {
    pub specks: bool,
    pub l1: bool,
    pub chisq: bool,
}

impl Metrics {
    pub fn any(self) -> bool {
        self.specks || self.l1 || self.chisq
    }
}

impl FromStr for Metrics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut m = Metrics::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "specks" => m.specks = true,
                "l1" => m.l1 = true,
                "chisq" => m.chisq = true,
                "feasibility" => {
                    m.l1 = true;
                    m.chisq = true;
                }
                "all" => m = Metrics { specks: true, l1: true, chisq: true },
                "none" => {}
                other => return Err(format!("unknown metric {other:?} (specks, l1, chisq, feasibility, all, none)")),
            }
        }
        Ok(m)
    }
}

/// Parses a kebab-case enum through its serde representation.
pub fn parse_kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| format!("{s:?}: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    /// Schema JSON; inferred from the input when absent.
    pub schema: Option<PathBuf>,
    pub method: Method,
    pub layers: usize,
    pub allocation: Allocation,
    pub epsilon: Epsilon,
    pub replicates: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub post_process: PostProcess,
    pub emission: Emission,
    pub evaluate: Metrics,
    pub alphas: Vec<f64>,
    pub interactions: bool,
    pub repetitions: usize,
    pub unsafe_no_noise: bool,
    pub debug_audit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            schema: None,
            method: Method::Steps,
            layers: 2,
            allocation: Allocation::default(),
            epsilon: Epsilon(1.0),
            replicates: 5,
            seed: 0,
            output: None,
            post_process: PostProcess::default(),
            emission: Emission::default(),
            evaluate: Metrics::default(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            interactions: false,
            repetitions: 1,
            unsafe_no_noise: false,
            debug_audit: false,
        }
    }
}

impl RunConfig {
    pub fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            post_process: self.post_process,
            emission: self.emission,
            keep_released: false,
            debug_audit: self.debug_audit,
        }
    }

    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// A method at a given tree height: `steps:2`, `random-partition:3`,
/// `laplace-full`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodSpec {
    pub method: Method,
    pub layers: usize,
}

impl MethodSpec {
    pub fn label(self) -> String {
        match self.method {
            Method::LaplaceFull => "laplace-full".into(),
            m => format!("{}-{}", m.name(), self.layers),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            Method::LaplaceFull => f.write_str("laplace-full"),
            m => write!(f, "{}:{}", m.name(), self.layers),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, layers) = match s.trim().split_once(':') {
            Some((n, l)) => (n, Some(l.parse::<usize>().map_err(|_| format!("bad tree height in {s:?}"))?)),
            None => (s.trim(), None),
        };
        let method: Method = name.parse()?;
        match (method, layers) {
            (Method::LaplaceFull, Some(_)) => Err("laplace-full takes no tree height".into()),
            (Method::LaplaceFull, None) => Ok(MethodSpec { method, layers: 0 }),
            (_, Some(layers)) => Ok(MethodSpec { method, layers }),
            (_, None) => Err(format!("{s:?} needs a tree height, e.g. {name}:2")),
        }
    }
}

impl Serialize for MethodSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockKind {
    Voter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    pub kind: MockKind,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub input: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    /// Generated data used when no input file is given.
    pub mock: Option<MockConfig>,
    pub methods: Vec<MethodSpec>,
    pub epsilons: Vec<Epsilon>,
    pub repetitions: usize,
    pub replicates: usize,
    pub seed: u64,
    pub allocation: Allocation,
    pub post_process: PostProcess,
    pub emission: Emission,
    pub metrics: Metrics,
    pub alphas: Vec<f64>,
    pub interactions: bool,
    pub output: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            input: None,
            schema: None,
            mock: None,
            methods: ["steps:2", "steps:3", "random-partition:2", "laplace-full"]
                .iter()
                .map(|s| s.parse().expect("static"))
                .collect(),
            epsilons: (-2..=2).map(|k| Epsilon((k as f64).exp())).collect(),
            repetitions: 24,
            replicates: 5,
            seed: 0,
            allocation: Allocation::default(),
            post_process: PostProcess::default(),
            emission: Emission::default(),
            metrics: Metrics {
                specks: true,
                l1: false,
                chisq: false,
            },
            alphas: DEFAULT_ALPHAS.to_vec(),
            interactions: false,
            output: None,
        }
    }
}

/// Reads a config file. A run manifest is accepted too: its `config`
/// entry is replayed.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if value.get("manifest_version").is_some() {
        value = value["config"].take();
    }
    serde_json::from_value(value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn validate_alphas(alphas: &[f64]) -> Result<(), CliError> {
    if alphas.is_empty() {
        return Err(CliError::config("at least one alpha is required"));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(CliError::config(format!("alpha {a} must lie in (0, 1)")));
    }
    Ok(())
}
