use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde_json::json;
use sha2::{Digest, Sha256};
use steps_core::dataset::{CategoricalDataset, Schema, SchemaSource};
use steps_core::dp::PrivacyBudget;
use steps_core::mock::{uniform_mock, voter_mock};
use steps_core::plan::{AllocationScheme, SanitizationPlan};
use steps_core::specks::{specks, PropensityOptions};
use steps_core::synth::{synthesize, Method};
use steps_core::tree::{build_tree, pad_phantoms, random_partition_tree, ELECTION_WARNING};
use steps_core::utility::{chisq_consistency, l1_distance, MedianRule, UtilityReport, DEFAULT_ALPHAS};

use crate::args::{EvalKind, EvaluateArgs, InspectArgs, MockArgs, MockKindArg, SweepArgs, SynthesizeArgs};
use crate::config::{load_config, validate_alphas, MockKind, Metrics, RunConfig, SweepConfig};
use crate::error::CliError;
use crate::report;
use crate::sweep::{run_sweep, SweepSpec};

/// Bumped when the manifest layout changes.
pub const MANIFEST_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const AUDIT_FILE: &str = "tree-audit.json";
pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";

pub fn replicate_file(r: usize) -> String {
    format!("replicate-{r}.csv")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::config)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn load_schema(path: &Path) -> Result<Arc<Schema>, CliError> {
    Schema::load(path).map(Arc::new).map_err(|e| CliError::from(e).at(path))
}

fn schema_source(schema: Option<&Path>) -> Result<SchemaSource, CliError> {
    Ok(match schema {
        Some(p) => SchemaSource::Fixed(load_schema(p)?),
        None => SchemaSource::Infer,
    })
}

fn load_data(path: &Path, source: SchemaSource) -> Result<CategoricalDataset, CliError> {
    CategoricalDataset::load_csv(path, source).map_err(|e| CliError::from(e).at(path))
}

fn utility(
    original: &CategoricalDataset,
    replicates: &[CategoricalDataset],
    metrics: Metrics,
    alphas: &[f64],
    interactions: bool,
) -> Result<UtilityReport, CliError> {
    let mut report = UtilityReport::default();
    if metrics.specks {
        let opts = PropensityOptions {
            interactions,
            ..Default::default()
        };
        report.specks = Some(specks(original, replicates, &opts)?);
    }
    if metrics.l1 {
        report.l1 = Some(l1_distance(original, replicates)?);
    }
    if metrics.chisq {
        report.chisq = Some(chisq_consistency(original, replicates, alphas, &MedianRule)?);
    }
    Ok(report)
}

pub fn resolve_run_config(args: &SynthesizeArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    args.apply(&mut cfg);
    Ok(cfg)
}

pub fn cmd_synthesize(args: &SynthesizeArgs) -> Result<(), CliError> {
    let cfg = resolve_run_config(args)?;
    run_synthesize(&cfg)
}

pub fn run_synthesize(cfg: &RunConfig) -> Result<(), CliError> {
    let input = cfg.input.as_deref().ok_or_else(|| CliError::config("no input file given (--input)"))?;
    let output = cfg.output.as_deref().ok_or_else(|| CliError::config("no output directory given (--output)"))?;
    let budget = cfg.epsilon.budget(cfg.unsafe_no_noise)?;
    validate_alphas(&cfg.alphas)?;
    if cfg.repetitions == 0 {
        return Err(CliError::config("repetitions must be at least 1"));
    }
    let mut timings = serde_json::Map::new();
    let clock = Instant::now();

    let data = load_data(input, schema_source(cfg.schema.as_deref())?)?;
    let input_bytes = fs::read(input).map_err(|e| CliError::io(input, e))?;
    timings.insert("load_s".into(), json!(clock.elapsed().as_secs_f64()));

    let plan = SanitizationPlan::new(data.schema(), cfg.layers, cfg.allocation.0.clone(), cfg.replicates, budget, cfg.seed)?;
    if budget.is_no_noise() {
        log::warn!("running without noise: the output is not differentially private");
    }
    let t = Instant::now();
    let result = synthesize(&data, cfg.method, &plan, &cfg.options())?;
    timings.insert("synthesize_s".into(), json!(t.elapsed().as_secs_f64()));
    let total = result.ledger.total();
    if !(total <= budget.epsilon() * (1.0 + steps_core::dp::BUDGET_TOLERANCE)) {
        return Err(CliError::Budget(format!("ledger total {total} exceeds the configured epsilon {}", budget.epsilon())));
    }

    let t = Instant::now();
    fs::create_dir_all(output).map_err(|e| CliError::io(output, e))?;
    let mut files = Vec::new();
    for (r, rep) in result.replicates.iter().enumerate() {
        let name = replicate_file(r + 1);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf)?;
        write_file(&output.join(&name), &buf)?;
        files.push(json!({"file": name, "records": rep.n(), "sha256": sha256_hex(&buf)}));
    }
    let mut audit = result.audit.clone();
    if cfg.method != Method::LaplaceFull {
        eprintln!("note: {ELECTION_WARNING}");
    }
    audit["ledger"] = result.ledger.to_json();
    write_json(&output.join(AUDIT_FILE), &audit)?;
    timings.insert("write_s".into(), json!(t.elapsed().as_secs_f64()));

    let report_name = if cfg.evaluate.any() {
        let t = Instant::now();
        let report = utility(&data, &result.replicates, cfg.evaluate, &cfg.alphas, cfg.interactions)?;
        write_json(&output.join(REPORT_FILE), &report)?;
        print!("{}", report::utility_table(&report));
        timings.insert("evaluate_s".into(), json!(t.elapsed().as_secs_f64()));
        Some(REPORT_FILE)
    } else {
        None
    };

    let manifest = json!({
        "manifest_version": MANIFEST_VERSION,
        "tool": {"name": "steps-dp", "version": env!("CARGO_PKG_VERSION")},
        "config": cfg.canonical_json(),
        "input": {"path": input, "records": data.n(), "sha256": sha256_hex(&input_bytes)},
        "schema": data.schema().as_ref(),
        "method": cfg.method,
        "plan": plan,
        "seed": cfg.seed,
        "epsilon": cfg.epsilon,
        "ledger": {"total": total, "entries": result.ledger.to_json()},
        "tree_audit": AUDIT_FILE,
        "replicates": files,
        "report": report_name,
    });
    write_json(&output.join(MANIFEST_FILE), &manifest)?;
    timings.insert("total_s".into(), json!(clock.elapsed().as_secs_f64()));
    timings.insert("threads".into(), json!(rayon::current_num_threads()));
    write_json(&output.join(TIMINGS_FILE), &timings)?;
    println!(
        "wrote {} replicates of {} records to {} (method {}, ledger total {})",
        result.replicates.len(),
        data.n(),
        output.display(),
        cfg.method.name(),
        total
    );
    Ok(())
}

/// Replicate files named on the command line; a directory expands to the
/// replicates listed in its manifest.
fn replicate_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if !p.is_dir() {
            out.push(p.clone());
            continue;
        }
        let manifest = p.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest).map_err(|e| CliError::io(&manifest, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::config(e).at(&manifest))?;
        let files = value["replicates"]
            .as_array()
            .ok_or_else(|| CliError::config("manifest lists no replicates").at(&manifest))?;
        for f in files {
            let name = f["file"].as_str().ok_or_else(|| CliError::config("bad replicate entry").at(&manifest))?;
            out.push(p.join(name));
        }
    }
    Ok(out)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let alphas = args.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
    validate_alphas(&alphas)?;
    let original = load_data(&args.original, schema_source(args.schema.as_deref())?)?;
    let schema = original.schema().clone();
    let replicates = replicate_paths(&args.replicates)?
        .iter()
        .map(|p| load_data(p, SchemaSource::Fixed(schema.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let metrics = match args.kind {
        EvalKind::Specks => Metrics { specks: true, ..Default::default() },
        EvalKind::Feasibility => Metrics { l1: true, chisq: true, ..Default::default() },
        EvalKind::All => Metrics { specks: true, l1: true, chisq: true },
    };
    let report = utility(&original, &replicates, metrics, &alphas, args.interactions)?;
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    print!("{}", report::utility_table(&report));
    Ok(())
}

pub fn resolve_sweep_config(args: &SweepArgs) -> Result<SweepConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => SweepConfig::default(),
    };
    args.apply(&mut cfg);
    Ok(cfg)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let cfg = resolve_sweep_config(args)?;
    let clock = Instant::now();
    let data = match (&cfg.input, &cfg.mock) {
        (Some(p), _) => load_data(p, schema_source(cfg.schema.as_deref())?)?,
        (None, Some(m)) => match m.kind {
            MockKind::Voter => voter_mock(m.n, m.seed),
        },
        (None, None) => return Err(CliError::config("a sweep needs --input or --mock-n")),
    };
    validate_alphas(&cfg.alphas)?;
    let mut epsilons = Vec::new();
    for e in &cfg.epsilons {
        epsilons.push(e.budget(false)?.epsilon());
    }
    let spec = SweepSpec {
        methods: cfg.methods.clone(),
        epsilons,
        repetitions: cfg.repetitions,
        replicates: cfg.replicates,
        seed: cfg.seed,
        allocation: cfg.allocation.0.clone(),
        options: steps_core::synth::SynthesisOptions {
            post_process: cfg.post_process,
            emission: cfg.emission,
            ..Default::default()
        },
        metrics: cfg.metrics,
        alphas: cfg.alphas.clone(),
        interactions: cfg.interactions,
    };
    let report = run_sweep(&data, &spec, &|line| log::info!("{line}"))?;
    print!("{}", report::sweep_table(&report, &cfg.alphas));
    if let Some(out) = &cfg.output {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let doc = json!({
            "manifest_version": MANIFEST_VERSION,
            "config": cfg,
            "records": data.n(),
            "report": report,
        });
        write_json(&out.join("sweep.json"), &doc)?;
        write_json(
            &out.join(TIMINGS_FILE),
            &json!({"total_s": clock.elapsed().as_secs_f64(), "threads": rayon::current_num_threads()}),
        )?;
    }
    Ok(())
}

pub fn cmd_inspect_tree(args: &InspectArgs) -> Result<(), CliError> {
    let data = load_data(&args.input, schema_source(args.schema.as_deref())?)?;
    // the tree does not consume budget; the plan only carries L and the seed
    let plan = SanitizationPlan::new(data.schema(), args.layers, AllocationScheme::Equal, 1, PrivacyBudget::new(1.0).expect("positive"), args.seed)?;
    let tree = match args.method {
        Method::Steps => build_tree(&data, &plan),
        Method::RandomPartition => random_partition_tree(&data, &plan, args.seed),
        Method::LaplaceFull => return Err(CliError::config("laplace-full builds no tree")),
    }
    .map_err(CliError::config)?;
    let tree = pad_phantoms(tree).map_err(CliError::config)?;
    eprintln!("note: {ELECTION_WARNING}");
    print!("{}", report::tree_summary(&tree));
    if let Some(p) = &args.output {
        write_json(p, &tree.audit(args.debug, None, None))?;
    }
    Ok(())
}

pub fn cmd_generate_mock(args: &MockArgs) -> Result<(), CliError> {
    let data = match args.kind {
        MockKindArg::Voter => voter_mock(args.n, args.seed),
        MockKindArg::Uniform => {
            let p = args.schema.as_deref().ok_or_else(|| CliError::config("uniform data needs --schema"))?;
            uniform_mock(load_schema(p)?, args.n, args.seed)
        }
    };
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write_file(&args.output, &buf)?;
    if let Some(p) = &args.schema_out {
        let mut text = data.schema().to_json_pretty();
        text.push('\n');
        write_file(p, text.as_bytes())?;
    }
    println!("wrote {} records to {}", data.n(), args.output.display());
    Ok(())
}
