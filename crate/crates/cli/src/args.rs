use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use steps_core::synth::{Emission, Method, PostProcess};

use crate::config::{parse_kebab, Allocation, Epsilon, MethodSpec, Metrics, RunConfig, SweepConfig};

/// Differentially private synthetic categorical data.
#[derive(Debug, Parser)]
#[command(name = "steps-dp", version, about)]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "STEPS_DP_THREADS")]
    pub threads: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Release synthetic replicates of a dataset.
    Synthesize(SynthesizeArgs),
    /// Score synthetic replicates against the original.
    Evaluate(EvaluateArgs),
    /// Repeat synthesis and evaluation over a grid of budgets.
    Sweep(SweepArgs),
    /// Build a partition tree and print its structure.
    InspectTree(InspectArgs),
    /// Write a generated dataset to CSV.
    GenerateMock(MockArgs),
}

fn post_process(s: &str) -> Result<PostProcess, String> {
    parse_kebab(s)
}

fn emission(s: &str) -> Result<Emission, String> {
    parse_kebab(s)
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// JSON config file (or a run manifest to replay); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Schema JSON; levels are inferred from the input when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// steps, random-partition or laplace-full.
    #[arg(long)]
    pub method: Option<Method>,
    /// Tree height L.
    #[arg(long, visible_alias = "L")]
    pub layers: Option<usize>,
    /// equal, half-split, or comma-separated shares.
    #[arg(long)]
    pub allocation: Option<Allocation>,
    /// Total budget: a number, e, e2, e-1, or inf (with --unsafe-no-noise).
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<Epsilon>,
    /// Number of synthetic replicates.
    #[arg(long = "m", visible_alias = "replicates")]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// hierarchical or flat.
    #[arg(long, value_parser = post_process)]
    pub post_process: Option<PostProcess>,
    /// rounded or multinomial.
    #[arg(long, value_parser = emission)]
    pub emission: Option<Emission>,
    /// Metrics to compute after synthesis: specks, l1, chisq, feasibility, all.
    #[arg(long)]
    pub evaluate: Option<Metrics>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Add pairwise interactions to the propensity model.
    #[arg(long)]
    pub interactions: bool,
    /// Release without noise. Offers no privacy protection.
    #[arg(long)]
    pub unsafe_no_noise: bool,
    /// Include true node counts in the tree audit file.
    #[arg(long)]
    pub debug_audit: bool,
}

impl SynthesizeArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { cfg.$f = v.clone().into(); })*};
        }
        set!(method, layers, allocation, epsilon, replicates, seed, post_process, emission, evaluate, alphas);
        if self.input.is_some() {
            cfg.input = self.input.clone();
        }
        if self.schema.is_some() {
            cfg.schema = self.schema.clone();
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        cfg.interactions |= self.interactions;
        cfg.debug_audit |= self.debug_audit;
        if self.unsafe_no_noise {
            cfg.unsafe_no_noise = true;
            cfg.epsilon = Epsilon(f64::INFINITY);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalKind {
    Specks,
    /// ℓ₁ distance and pairwise chi-squared consistency.
    Feasibility,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub kind: EvalKind,
    #[arg(long)]
    pub original: PathBuf,
    /// Replicate CSVs, or a synthesize output directory.
    #[arg(long, num_args = 1.., required = true)]
    pub replicates: Vec<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub interactions: bool,
    /// Where to write the JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Use the generated voter data with this many records instead of an input file.
    #[arg(long)]
    pub mock_n: Option<usize>,
    #[arg(long)]
    pub mock_seed: Option<u64>,
    /// Comma-separated, e.g. steps:2,random-partition:2,laplace-full.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<MethodSpec>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub epsilons: Option<Vec<Epsilon>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long = "m", visible_alias = "replicates")]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub allocation: Option<Allocation>,
    #[arg(long, value_parser = post_process)]
    pub post_process: Option<PostProcess>,
    #[arg(long, value_parser = emission)]
    pub emission: Option<Emission>,
    #[arg(long)]
    pub metrics: Option<Metrics>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub interactions: bool,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl SweepArgs {
    pub fn apply(&self, cfg: &mut SweepConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { cfg.$f = v.clone().into(); })*};
        }
        set!(methods, epsilons, repetitions, replicates, seed, allocation, post_process, emission, metrics, alphas);
        if self.input.is_some() {
            cfg.input = self.input.clone();
        }
        if self.schema.is_some() {
            cfg.schema = self.schema.clone();
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        if self.mock_n.is_some() || self.mock_seed.is_some() {
            let base = cfg.mock.clone().unwrap_or(crate::config::MockConfig {
                kind: crate::config::MockKind::Voter,
                n: steps_core::mock::VOTER_N,
                seed: 0,
            });
            cfg.mock = Some(crate::config::MockConfig {
                kind: base.kind,
                n: self.mock_n.unwrap_or(base.n),
                seed: self.mock_seed.unwrap_or(base.seed),
            });
        }
        cfg.interactions |= self.interactions;
    }
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, visible_alias = "L", default_value_t = 2)]
    pub layers: usize,
    /// steps or random-partition.
    #[arg(long, default_value = "steps")]
    pub method: Method,
    /// Seed of the random partition order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Include true node counts (confidential).
    #[arg(long)]
    pub debug: bool,
    /// Write the full audit JSON here.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MockKindArg {
    /// 15-attribute youth-voter schema.
    Voter,
    /// Uniform over the cells of --schema.
    Uniform,
}

#[derive(Debug, Args)]
pub struct MockArgs {
    #[arg(long, value_enum, default_value = "voter")]
    pub kind: MockKindArg,
    #[arg(long, default_value_t = steps_core::mock::VOTER_N)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Schema JSON (required for uniform data).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Also write the schema JSON here.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
}
