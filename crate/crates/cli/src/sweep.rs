//! ε-sweeps: repeated synthesis and evaluation over a grid of budgets.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use steps_core::dataset::CategoricalDataset;
use steps_core::dp::PrivacyBudget;
use steps_core::plan::{AllocationScheme, SanitizationPlan};
use steps_core::specks::{specks, PropensityOptions};
use steps_core::stats::spearman;
use steps_core::synth::{Method, Prepared, SynthesisOptions};
use steps_core::utility::{chisq_consistency, l1_distance, MedianRule};

use crate::config::{Metrics, MethodSpec};
use crate::error::CliError;

pub struct SweepSpec {
    pub methods: Vec<MethodSpec>,
    pub epsilons: Vec<f64>,
    pub repetitions: usize,
    pub replicates: usize,
    pub seed: u64,
    pub allocation: AllocationScheme,
    pub options: SynthesisOptions,
    pub metrics: Metrics,
    pub alphas: Vec<f64>,
    pub interactions: bool,
}

/// Seed of repetition `rep` at grid point `eps_index`.
pub fn repetition_seed(base: u64, eps_index: usize, rep: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"steps-dp/sweep/v1");
    h.update(base.to_le_bytes());
    h.update((eps_index as u64).to_le_bytes());
    h.update((rep as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Serialize)]
pub struct RepetitionResult {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ks: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_l1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chisq_rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub epsilon: f64,
    pub repetitions: Vec<RepetitionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ks: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd_ks: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_l1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_chisq_rates: Option<Vec<f64>>,
}

/// Spearman test of per-repetition mean KS against ε.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Trend {
    pub rho: f64,
    pub n: usize,
    pub p_decreasing: f64,
    /// Grid means never increase from one ε to the next.
    pub means_non_increasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSweep {
    pub label: String,
    pub method: Method,
    pub layers: usize,
    pub grid: Vec<GridPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_trend: Option<Trend>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub methods: Vec<MethodSweep>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn plan_for(
    data: &CategoricalDataset,
    spec: &SweepSpec,
    ms: MethodSpec,
    epsilon: f64,
    seed: u64,
) -> Result<SanitizationPlan, CliError> {
    let budget = PrivacyBudget::new(epsilon).map_err(CliError::config)?;
    // Laplace-full ignores the tree height; any valid one will do
    let layers = if ms.method == Method::LaplaceFull { 1 } else { ms.layers };
    let scheme = if ms.method == Method::LaplaceFull {
        AllocationScheme::Equal
    } else {
        spec.allocation.clone()
    };
    Ok(SanitizationPlan::new(data.schema(), layers, scheme, spec.replicates, budget, seed)?)
}

fn evaluate(
    data: &CategoricalDataset,
    replicates: &[CategoricalDataset],
    spec: &SweepSpec,
    seed: u64,
) -> Result<RepetitionResult, CliError> {
    let mean_ks = if spec.metrics.specks {
        let opts = PropensityOptions {
            interactions: spec.interactions,
            ..Default::default()
        };
        Some(specks(data, replicates, &opts)?.mean_ks)
    } else {
        None
    };
    let mean_l1 = if spec.metrics.l1 {
        Some(l1_distance(data, replicates)?.mean)
    } else {
        None
    };
    let chisq_rates = if spec.metrics.chisq {
        Some(chisq_consistency(data, replicates, &spec.alphas, &MedianRule)?.rates)
    } else {
        None
    };
    Ok(RepetitionResult {
        seed,
        mean_ks,
        mean_l1,
        chisq_rates,
    })
}

/// Runs every method over the ε grid. Data-dependent structure that does
/// not depend on the seed (the STEPS tree, the true full table) is built
/// once per method; random partitions are redrawn per repetition.
pub fn run_sweep(
    data: &CategoricalDataset,
    spec: &SweepSpec,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<SweepReport, CliError> {
    if spec.repetitions == 0 || spec.epsilons.is_empty() || spec.methods.is_empty() {
        return Err(CliError::config("a sweep needs methods, epsilons and at least one repetition"));
    }
    let mut methods = Vec::new();
    for &ms in &spec.methods {
        let shared = match ms.method {
            Method::RandomPartition => None,
            _ => Some(Prepared::new(data, ms.method, &plan_for(data, spec, ms, 1.0, spec.seed)?)?),
        };
        let mut grid = Vec::new();
        for (k, &eps) in spec.epsilons.iter().enumerate() {
            let start = std::time::Instant::now();
            let reps: Vec<RepetitionResult> = (0..spec.repetitions)
                .into_par_iter()
                .map(|r| {
                    let seed = repetition_seed(spec.seed, k, r);
                    let plan = plan_for(data, spec, ms, eps, seed)?;
                    let own;
                    let prepared = match &shared {
                        Some(p) => p,
                        None => {
                            own = Prepared::new(data, ms.method, &plan)?;
                            &own
                        }
                    };
                    let result = prepared.run(data, &plan, &spec.options)?;
                    evaluate(data, &result.replicates, spec, seed)
                })
                .collect::<Result<_, CliError>>()?;
            let ks: Option<Vec<f64>> = reps.iter().map(|r| r.mean_ks).collect();
            let l1: Option<Vec<f64>> = reps.iter().map(|r| r.mean_l1).collect();
            let rates: Option<Vec<Vec<f64>>> = reps.iter().map(|r| r.chisq_rates.clone()).collect();
            let point = GridPoint {
                epsilon: eps,
                mean_ks: ks.as_deref().map(mean),
                sd_ks: ks.as_deref().map(sd),
                mean_l1: l1.as_deref().map(mean),
                mean_chisq_rates: rates.map(|rs| (0..spec.alphas.len()).map(|a| rs.iter().map(|r| r[a]).sum::<f64>() / rs.len() as f64).collect()),
                repetitions: reps,
            };
            progress(&format!(
                "{} eps={:.4}: {}{:.1}s",
                ms.label(),
                eps,
                point.mean_ks.map_or(String::new(), |k| format!("mean KS {k:.4}, ")),
                start.elapsed().as_secs_f64()
            ));
            grid.push(point);
        }
        let ks_trend = if spec.metrics.specks && spec.epsilons.len() > 1 {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for g in &grid {
                for r in &g.repetitions {
                    x.push(g.epsilon);
                    y.push(r.mean_ks.expect("specks enabled"));
                }
            }
            let t = spearman(&x, &y);
            let mut order: Vec<&GridPoint> = grid.iter().collect();
            order.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
            let means_non_increasing = order.windows(2).all(|w| w[1].mean_ks <= w[0].mean_ks);
            Some(Trend {
                rho: t.rho,
                n: t.n,
                p_decreasing: t.p_decreasing,
                means_non_increasing,
            })
        } else {
            None
        };
        methods.push(MethodSweep {
            label: ms.label(),
            method: ms.method,
            layers: ms.layers,
            grid,
            ks_trend,
        });
    }
    Ok(SweepReport { methods })
}
