//! `masse`: run the pipeline, call single tools, score and replay traces.
//!
//! Exit codes: 0 success, 1 verdict inadequate, 2 pipeline failure,
//! 3 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use masse_core::fem_solver::{default_combinations, run_complete_analysis, LoadCombination};
use masse_core::memory::canonical_json;
use masse_core::model_builder::StructuralModel;
use masse_core::orchestrator::score::{GROUND_TRUTH_JSON, TOLERANCES_JSON};
use masse_core::orchestrator::{
    run_pipeline, run_pipeline_with, score_trace, BackendConfig, GroundTruth, PipelineConfig,
    PipelineError, ScriptedBackend,
};
use masse_core::protocol::{validate_payload, MessageKind, TraceLog};
use masse_core::seismic_loads::LoadData;
use masse_core::seismic_retrieval::{city_not_found_document, SeismicDatabase, SeismicTable};
use masse_core::verification::VERDICT_INADEQUATE;
use rayon::prelude::*;
use serde_json::{json, Value};

const RUN_FILES: [&str; 4] = [
    "trace.jsonl",
    "analysis_results.json",
    "internal_forces.json",
    "structural_model.json",
];

#[derive(Parser)]
#[command(name = "masse", version, about = "Racking-frame safety pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Deterministic,
    Scripted,
    Remote,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Pipeline configuration (JSON overrides of the defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Decision backend; overrides the configuration's backend kind.
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Trace to replay with the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ten-step pipeline on a problem statement.
    Run {
        problem: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Run several problems, each into its own subdirectory of --out.
    Batch {
        #[arg(required = true)]
        problems: Vec<PathBuf>,
        #[command(flatten)]
        args: RunArgs,
        /// Problems run at the same time.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Look up the seismic parameters of a city.
    Seismic {
        #[arg(long)]
        city: String,
        /// Seismic table CSV; the shipped table when absent.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Analyse a structural model under load data and print the force envelope.
    Fem {
        model: PathBuf,
        loads: PathBuf,
        /// Combinations as `name=case*factor+case*factor;...`.
        #[arg(long)]
        combos: Option<String>,
        /// Where to write the per-element internal forces.
        #[arg(long, default_value = "internal_forces.json")]
        internal_forces: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Score a trace against ground truth.
    Score {
        trace: PathBuf,
        /// Ground truth JSON; the shipped golden truth when absent.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Tolerances JSON; the shipped tolerances when absent.
        #[arg(long)]
        tolerances: Option<PathBuf>,
    },
    /// Re-execute a trace through the scripted backend and compare memory snapshots.
    Replay {
        trace: PathBuf,
        /// Expected snapshot; defaults to analysis_results.json or snapshot.json beside the trace.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Errors that map to exit code 3.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value> {
    serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            println!("ERROR: {e:#}");
            ExitCode::from(if e.is::<Usage>() { 3 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Run { problem, args } => {
            let config = run_config(&args)?;
            let text = read(&problem)?;
            let (code, line) = run_one(&text, &config, &args.out, args.force)?;
            println!("{line}");
            Ok(code)
        }
        Command::Batch {
            problems,
            args,
            jobs,
        } => batch(&problems, &args, jobs),
        Command::Seismic { city, table } => {
            let db = match table {
                Some(path) => SeismicTable::from_path(&path)
                    .and_then(SeismicDatabase::from_table)
                    .map_err(|e| usage(e.to_string()))?,
                None => SeismicDatabase::builtin().clone(),
            };
            let doc = match db.get_seismic_parameters(&city) {
                Ok((p, _)) => serde_json::to_value(p)?,
                Err(_) => city_not_found_document(),
            };
            println!("{}", canonical_json(&doc));
            Ok(0)
        }
        Command::Fem {
            model,
            loads,
            combos,
            internal_forces,
            force,
        } => fem(&model, &loads, combos.as_deref(), &internal_forces, force),
        Command::Score {
            trace,
            truth,
            tolerances,
        } => {
            let log = TraceLog::parse_jsonl(&read(&trace)?).map_err(|e| usage(e.to_string()))?;
            let truth_text = truth.map(|p| read(&p)).transpose()?;
            let tol_text = tolerances.map(|p| read(&p)).transpose()?;
            let truth = GroundTruth::from_json(
                truth_text.as_deref().unwrap_or(GROUND_TRUTH_JSON),
                tol_text.as_deref().unwrap_or(TOLERANCES_JSON),
            )
            .map_err(|e| usage(e.to_string()))?;
            println!("{}", score_trace(&log, &truth));
            Ok(0)
        }
        Command::Replay {
            trace,
            snapshot,
            config,
        } => replay(&trace, snapshot, config),
    }
}

fn run_config(args: &RunArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::from_json(&read(path)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => PipelineConfig::default(),
    };
    match (args.backend, &args.script) {
        (Some(BackendKind::Scripted), Some(trace)) | (None, Some(trace)) => {
            config.backend = BackendConfig::Scripted {
                trace: trace.clone(),
            };
        }
        (Some(BackendKind::Scripted), None) => {
            if !matches!(config.backend, BackendConfig::Scripted { .. }) {
                bail!(usage(
                    "--backend scripted needs --script or a scripted backend in --config"
                ));
            }
        }
        (Some(BackendKind::Deterministic), _) => config.backend = BackendConfig::Deterministic,
        (Some(BackendKind::Remote), _) => {
            if !matches!(config.backend, BackendConfig::Remote(_)) {
                bail!(usage(
                    "--backend remote needs the endpoint and model in --config"
                ));
            }
        }
        (None, None) => {}
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

fn check_outputs(out: &Path, force: bool) -> Result<()> {
    if !force {
        if let Some(existing) = RUN_FILES.iter().map(|f| out.join(f)).find(|p| p.exists()) {
            bail!(usage(format!(
                "{} exists; pass --force to overwrite",
                existing.display()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Runs one problem and writes its files. Returns the exit code and the final line.
fn run_one(text: &str, config: &PipelineConfig, out: &Path, force: bool) -> Result<(u8, String)> {
    check_outputs(out, force)?;
    let (trace, snapshot, artifacts, outcome) = match run_pipeline(text, config) {
        Ok(run) => {
            let code = u8::from(run.assessment.verdict == VERDICT_INADEQUATE);
            let verdict = run.assessment.verdict.clone();
            (
                run.trace,
                run.memory.to_snapshot(),
                run.artifacts,
                Ok((code, verdict)),
            )
        }
        Err(PipelineError::Config(msg)) => bail!(usage(msg)),
        Err(PipelineError::Failed(f)) => {
            let line = format!(
                "ERROR: {} failed ({}): {}: {}",
                f.state, f.label, f.failure.kind, f.failure.message
            );
            (f.trace, f.memory.to_snapshot(), f.artifacts, Err(line))
        }
    };
    write_file(&out.join("trace.jsonl"), &trace.render_jsonl())?;
    write_file(
        &out.join("analysis_results.json"),
        &canonical_json(&snapshot),
    )?;
    for name in ["internal_forces.json", "structural_model.json"] {
        if let Some(doc) = artifacts.get(name) {
            write_file(&out.join(name), &canonical_json(doc))?;
        }
    }
    Ok(match outcome {
        Ok(ok) => ok,
        Err(line) => (2, line),
    })
}

fn batch(problems: &[PathBuf], args: &RunArgs, jobs: usize) -> Result<u8> {
    if jobs == 0 {
        bail!(usage("--jobs must be at least 1"));
    }
    let config = run_config(args)?;
    let texts = problems
        .iter()
        .map(|p| read(p))
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<String> = Vec::new();
    for p in problems {
        let stem = p
            .file_stem()
            .map_or("problem".into(), |s| s.to_string_lossy().into_owned());
        let mut name = stem.clone();
        let mut n = 2;
        while names.contains(&name) {
            name = format!("{stem}-{n}");
            n += 1;
        }
        names.push(name);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building the worker pool")?;
    let results: Vec<Result<(u8, String)>> = pool.install(|| {
        texts
            .par_iter()
            .zip(&names)
            .map(|(text, name)| run_one(text, &config, &args.out.join(name), args.force))
            .collect()
    });
    let mut worst = 0;
    for (name, r) in names.iter().zip(results) {
        let (code, line) = match r {
            Ok(ok) => ok,
            Err(e) if e.is::<Usage>() => (3, format!("ERROR: {e:#}")),
            Err(e) => (2, format!("ERROR: {e:#}")),
        };
        println!("{name}: {line}");
        worst = worst.max(code);
    }
    Ok(worst)
}

fn parse_combos(spec: &str) -> Result<Vec<LoadCombination>> {
    let mut combos = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, terms) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("combination `{part}` has no `=`")))?;
        let mut factors = Vec::new();
        for term in terms.split('+') {
            let (case, factor) = term
                .split_once('*')
                .ok_or_else(|| usage(format!("term `{term}` is not case*factor")))?;
            let factor: f64 = factor
                .trim()
                .parse()
                .map_err(|_| usage(format!("factor `{factor}` is not a number")))?;
            factors.push((case.trim().to_string(), factor));
        }
        let refs: Vec<(&str, f64)> = factors.iter().map(|(c, f)| (c.as_str(), *f)).collect();
        combos.push(LoadCombination::new(name.trim(), &refs));
    }
    if combos.is_empty() {
        bail!(usage("no combinations given"));
    }
    Ok(combos)
}

fn schema_checked(schema: &str, doc: &Value, path: &Path) -> Result<()> {
    let violations = validate_payload(schema, doc).map_err(|e| usage(e.to_string()))?;
    if violations.is_empty() {
        return Ok(());
    }
    let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
    bail!(usage(format!(
        "{} violates `{schema}`:\n  {}",
        path.display(),
        list.join("\n  ")
    )))
}

fn fem(model: &Path, loads: &Path, combos: Option<&str>, out: &Path, force: bool) -> Result<u8> {
    let model_doc = read_json(model)?;
    schema_checked("structural_model", &model_doc, model)?;
    let loads_doc = read_json(loads)?;
    schema_checked("load_data", &loads_doc, loads)?;
    let model: StructuralModel =
        serde_json::from_value(model_doc).map_err(|e| usage(e.to_string()))?;
    let load_data: LoadData =
        serde_json::from_value(loads_doc).map_err(|e| usage(e.to_string()))?;
    let combos = match combos {
        Some(spec) => parse_combos(spec)?,
        None => default_combinations(1.0, 1.5),
    };
    if out.exists() && !force {
        bail!(usage(format!(
            "{} exists; pass --force to overwrite",
            out.display()
        )));
    }
    let analysis =
        run_complete_analysis(&model, &load_data, &combos).map_err(|e| anyhow!("{e}"))?;
    analysis
        .write_internal_forces(out)
        .map_err(|e| anyhow!("{e}"))?;
    println!(
        "{}",
        canonical_json(&serde_json::to_value(analysis.envelope)?)
    );
    Ok(0)
}

/// Problem text and run options recorded in a trace.
fn trace_setup(log: &TraceLog) -> Result<(String, Value)> {
    let text = log
        .messages()
        .find(|(_, m)| m.kind == MessageKind::Instruction)
        .and_then(|(_, m)| m.payload["inputs"]["problem_text"].as_str())
        .ok_or_else(|| usage("trace has no problem text in its first instruction"))?
        .to_string();
    let init = log
        .step_ends()
        .next()
        .map(|e| e.summary.clone())
        .unwrap_or(Value::Null);
    Ok((text, init))
}

fn replay(trace: &Path, snapshot: Option<PathBuf>, config: Option<PathBuf>) -> Result<u8> {
    let log = TraceLog::parse_jsonl(&read(trace)?).map_err(|e| usage(e.to_string()))?;
    let (text, init) = trace_setup(&log)?;
    let config = match config {
        Some(path) => PipelineConfig::from_json(&read(&path)?).map_err(usage)?,
        None => {
            let mut overrides = serde_json::Map::new();
            for key in ["max_rounds", "use_memory", "enforce_schemas"] {
                if let Some(v) = init.get(key) {
                    overrides.insert(key.to_string(), v.clone());
                }
            }
            PipelineConfig::from_json(&Value::Object(overrides).to_string()).map_err(usage)?
        }
    };
    let expected_path = match snapshot {
        Some(p) => p,
        None => {
            let dir = trace.parent().unwrap_or(Path::new("."));
            ["analysis_results.json", "snapshot.json"]
                .iter()
                .map(|f| dir.join(f))
                .find(|p| p.exists())
                .ok_or_else(|| usage("no snapshot beside the trace; pass --snapshot"))?
        }
    };
    let expected = read_json(&expected_path)?;

    let mut backend = ScriptedBackend::from_trace(&log);
    let memory = match run_pipeline_with(&text, &config, &mut backend) {
        Ok(run) => run.memory,
        Err(PipelineError::Config(msg)) => bail!(usage(msg)),
        Err(PipelineError::Failed(f)) => f.memory,
    };
    let got = memory.to_snapshot();
    if got == expected {
        println!("snapshot identical");
        return Ok(0);
    }
    let keys = |v: &Value| {
        v.as_object()
            .map(|o| o.keys().cloned().collect::<Vec<_>>())
            .unwrap_or_default()
    };
    let mut differing: Vec<String> = keys(&got)
        .into_iter()
        .chain(keys(&expected))
        .filter(|k| got.get(k) != expected.get(k))
        .collect();
    differing.sort();
    differing.dedup();
    println!(
        "{}",
        canonical_json(&json!({"snapshot_differs": differing}))
    );
    Ok(2)
}
