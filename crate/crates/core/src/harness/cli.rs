//! `spatialog` command line: `infer`, `eval`, `synth`, `render`, `validate`.
//!
//! Exit status is 0 on success, 1 for invalid input (bad flags, queries,
//! heatmaps or datasets) and 2 for I/O failures. Every engine flag can also
//! come from a JSON file passed with `--config`; flags given on the command
//! line win.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use super::render::{cells_pgm, heatmap_pgm};
use super::{roc_auc, score_modes, EvalMode, ScoreParams};
use crate::grounding::{build_pyramid, GroundingParams, Pooling};
use crate::heatmap::{read_bundle, Bundle, BundleError};
use crate::inference::{infer_multiscale, Aggregator, InferParams, ResultDoc};
use crate::logic::{compile_query, parse_program, shipped, validate, CompileError, CompiledQuery, Program};
use crate::scenegen::{gen_dataset, read_index, DatasetConfig, DatasetError, Layout, SceneSpec, RNG_NAME};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => m,
        }
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

fn invalid(e: impl ToString) -> CliError {
    CliError::Invalid(e.to_string())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Parser, Debug)]
#[command(
    name = "spatialog",
    version,
    about = "Spatial configuration queries over symbol heatmaps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a query on one bundle and write the result JSON.
    Infer {
        #[command(flatten)]
        engine: EngineArgs,
        /// Bundle manifest.
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Result file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-symbol and configuration PGM renders.
        #[arg(long)]
        render: Option<PathBuf>,
    },
    /// Score a labeled dataset under ablation modes and report AUCs.
    Eval {
        #[command(flatten)]
        engine: EngineArgs,
        /// Dataset directory holding index.jsonl.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Comma-separated modes; all six when absent.
        #[arg(long)]
        mode: Option<String>,
        /// Scale used by spatial-fixed when listed without one.
        #[arg(long)]
        sigma: Option<u32>,
        /// Directory for auc.csv and scores.csv; AUCs go to standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic labeled dataset.
    Synth(SynthArgs),
    /// Render the heatmaps of a bundle (and optionally a query map) as PGM.
    Render {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check query files and bundles without running inference.
    Validate {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct EngineArgs {
    /// JSON file with default values for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Query file; the embedded corrected tool-on-floor query when absent.
    #[arg(long)]
    query: Option<PathBuf>,
    /// Query to run when the file defines several; the first by default.
    #[arg(long)]
    name: Option<String>,
    /// Rule file replacing the embedded prelude.
    #[arg(long)]
    prelude: Option<PathBuf>,
    /// Comma-separated pooling factors.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<u32>>,
    #[arg(long)]
    pooling: Option<Pooling>,
    /// Proofs combined per location by topk.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Proposals kept per symbol and scale.
    #[arg(long)]
    max_facts: Option<usize>,
    /// Proofs kept per scale.
    #[arg(long)]
    max_proofs: Option<usize>,
    /// max or topk.
    #[arg(long)]
    agg: Option<String>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// JSON file with default values for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tool-on-floor positives.
    #[arg(long)]
    pos: Option<usize>,
    /// Tool-not-on-floor hard negatives.
    #[arg(long)]
    hard_neg: Option<usize>,
    #[arg(long)]
    tool_only: Option<usize>,
    #[arg(long)]
    floor_only: Option<usize>,
    #[arg(long)]
    neither: Option<usize>,
    /// Pipe with adjacent leakage.
    #[arg(long)]
    pipe_pos: Option<usize>,
    /// Pipe with distant leakage.
    #[arg(long)]
    pipe_far: Option<usize>,
    /// Base seed; scene i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Image side in pixels.
    #[arg(long)]
    size: Option<u32>,
    /// Uniform noise amplitude.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    blob_min: Option<u32>,
    #[arg(long)]
    blob_max: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Values accepted in a `--config` file. Keys match the long flag names
/// with `_` for `-`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    query: Option<PathBuf>,
    name: Option<String>,
    prelude: Option<PathBuf>,
    bundle: Option<PathBuf>,
    dataset: Option<PathBuf>,
    scales: Option<Vec<u32>>,
    pooling: Option<Pooling>,
    k: Option<usize>,
    epsilon: Option<f64>,
    max_facts: Option<usize>,
    max_proofs: Option<usize>,
    agg: Option<String>,
    mode: Option<String>,
    sigma: Option<u32>,
    out: Option<PathBuf>,
    render: Option<PathBuf>,
    seed: Option<u64>,
    pos: Option<usize>,
    hard_neg: Option<usize>,
    tool_only: Option<usize>,
    floor_only: Option<usize>,
    neither: Option<usize>,
    pipe_pos: Option<usize>,
    pipe_far: Option<usize>,
    size: Option<u32>,
    noise: Option<f64>,
    blob_min: Option<u32>,
    blob_max: Option<u32>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| invalid(format!("{}: {e}", p.display()))),
    }
}

/// Engine settings after merging flags over the config file.
struct Engine {
    query: CompiledQuery,
    params: ScoreParams,
}

impl Engine {
    fn resolve(args: &EngineArgs, cfg: &FileConfig) -> Result<Self, CliError> {
        let program = load_program(
            args.query.as_deref().or(cfg.query.as_deref()),
            args.prelude.as_deref().or(cfg.prelude.as_deref()),
        )?;
        let name = match args.name.as_ref().or(cfg.name.as_ref()) {
            Some(n) => n.clone(),
            None => program
                .queries
                .first()
                .map(|q| q.name.clone())
                .ok_or_else(|| invalid("the query file defines no query"))?,
        };
        let query = compile_query(&program, &name).map_err(compile_message)?;

        let defaults = GroundingParams::default();
        let grounding = GroundingParams {
            scales: args
                .scales
                .clone()
                .or_else(|| cfg.scales.clone())
                .unwrap_or(defaults.scales),
            pooling: args.pooling.or(cfg.pooling).unwrap_or(defaults.pooling),
            epsilon: args.epsilon.or(cfg.epsilon).unwrap_or(defaults.epsilon),
            max_facts: args.max_facts.or(cfg.max_facts).unwrap_or(defaults.max_facts),
        };
        grounding.check().map_err(invalid)?;

        let k = args.k.or(cfg.k).unwrap_or(3);
        if k == 0 {
            return Err(invalid("--k must be at least 1"));
        }
        let agg = match args.agg.as_deref().or(cfg.agg.as_deref()).unwrap_or("topk") {
            "topk" => Aggregator::TopK(k),
            "max" => Aggregator::Max,
            other => return Err(invalid(format!("unknown aggregator `{other}` (expected max or topk)"))),
        };
        let max_proofs = args
            .max_proofs
            .or(cfg.max_proofs)
            .unwrap_or(InferParams::default().max_proofs);
        if max_proofs == 0 {
            return Err(invalid("--max-proofs must be at least 1"));
        }
        Ok(Engine {
            query,
            params: ScoreParams {
                grounding,
                infer: InferParams { agg, max_proofs },
            },
        })
    }
}

fn compile_message(e: CompileError) -> CliError {
    match e {
        CompileError::Invalid(violations) => invalid(
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        other => invalid(other),
    }
}

fn load_program(query: Option<&Path>, prelude: Option<&Path>) -> Result<Program, CliError> {
    let parse = |text: &str, origin: &str| parse_program(text).map_err(|e| invalid(format!("{origin}:{e}")));
    let prelude = match prelude {
        Some(p) => parse(&read_text(p)?, &p.display().to_string())?,
        None => parse(shipped::PRELUDE, "prelude.sl")?,
    };
    let body = match query {
        Some(p) => parse(&read_text(p)?, &p.display().to_string())?,
        None => parse(shipped::TOOL_ON_FLOOR_CORRECTED, "tool_on_floor_corrected.sl")?,
    };
    Ok(prelude.merged(body))
}

fn require<'a>(flag: Option<&'a Path>, name: &str) -> Result<&'a Path, CliError> {
    flag.ok_or_else(|| invalid(format!("missing --{name}")))
}

fn symbol_file(symbol: &str) -> String {
    let clean: String = symbol
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{clean}.pgm")
}

fn render_dir(dir: &Path, bundle: &Bundle, config_map: Option<Vec<u8>>) -> Result<(), CliError> {
    for h in bundle.heatmaps() {
        write_file(&dir.join(symbol_file(&h.symbol)), heatmap_pgm(&h.map))?;
    }
    if let Some(bytes) = config_map {
        write_file(&dir.join("config.pgm"), bytes)?;
    }
    Ok(())
}

fn cmd_infer(
    engine: &EngineArgs,
    bundle: Option<&Path>,
    out: Option<&Path>,
    render: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = load_config(engine.config.as_deref())?;
    let eng = Engine::resolve(engine, &cfg)?;
    let bundle_path = require(bundle.or(cfg.bundle.as_deref()), "bundle")?;
    let bundle = read_bundle(bundle_path)?;
    let pyramid = build_pyramid(&bundle, &eng.params.grounding).map_err(invalid)?;
    let result = infer_multiscale(&eng.query, &pyramid, &eng.params.infer).map_err(invalid)?;
    let json = ResultDoc::from(&result).to_json();
    match out.or(cfg.out.as_deref()) {
        Some(p) => write_file(p, json)?,
        None => print!("{json}"),
    }
    if let Some(dir) = render.or(cfg.render.as_deref()) {
        let grid = pyramid[&result.sigma].grid();
        render_dir(dir, &bundle, Some(cells_pgm(grid, &result.cells)))?;
    }
    Ok(())
}

fn parse_modes(list: Option<&str>, sigma: u32) -> Result<Vec<EvalMode>, CliError> {
    let Some(list) = list else {
        return Ok(EvalMode::all(sigma).to_vec());
    };
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s == "spatial-fixed" {
                Ok(EvalMode::SpatialFixed(sigma))
            } else {
                s.parse().map_err(invalid)
            }
        })
        .collect()
}

fn csv_bytes(rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).map_err(invalid)?;
    }
    w.into_inner().map_err(invalid)
}

fn cmd_eval(
    engine: &EngineArgs,
    dataset: Option<&Path>,
    mode: Option<&str>,
    sigma: Option<u32>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = load_config(engine.config.as_deref())?;
    let eng = Engine::resolve(engine, &cfg)?;
    let root = require(dataset.or(cfg.dataset.as_deref()), "dataset")?;
    let modes = parse_modes(mode.or(cfg.mode.as_deref()), sigma.or(cfg.sigma).unwrap_or(1))?;
    let index = read_index(root)?;

    let mut per_mode: Vec<Vec<f64>> = vec![Vec::new(); modes.len()];
    let mut labels = Vec::new();
    let mut score_rows = vec![vec!["file".into(), "label".into(), "mode".into(), "score".into()]];
    for entry in &index {
        let bundle = read_bundle(root.join(&entry.file))?;
        let scores = score_modes(&bundle, &eng.query, &modes, &eng.params).map_err(invalid)?;
        labels.push(entry.label.is_positive());
        let label = if entry.label.is_positive() {
            "positive"
        } else {
            "negative"
        };
        for (i, (m, s)) in modes.iter().zip(&scores).enumerate() {
            per_mode[i].push(*s);
            score_rows.push(vec![entry.file.clone(), label.into(), m.to_string(), s.to_string()]);
        }
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    let mut auc_rows = vec![vec!["mode".into(), "auc".into(), "n_pos".into(), "n_neg".into()]];
    for (m, scores) in modes.iter().zip(&per_mode) {
        let roc = roc_auc(scores, &labels).map_err(invalid)?;
        auc_rows.push(vec![
            m.to_string(),
            roc.auc.to_string(),
            n_pos.to_string(),
            n_neg.to_string(),
        ]);
    }
    let auc_csv = csv_bytes(&auc_rows)?;
    match out.or(cfg.out.as_deref()) {
        Some(dir) => {
            write_file(&dir.join("auc.csv"), &auc_csv)?;
            write_file(&dir.join("scores.csv"), csv_bytes(&score_rows)?)?;
        }
        None => print!("{}", String::from_utf8_lossy(&auc_csv)),
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let out = require(args.out.as_deref().or(cfg.out.as_deref()), "out")?;
    let defaults = SceneSpec::default();
    let counts = [
        (Layout::ToolOnFloorPositive, args.pos.or(cfg.pos).unwrap_or(20)),
        (Layout::ToolNotOnFloor, args.hard_neg.or(cfg.hard_neg).unwrap_or(20)),
        (Layout::ToolOnly, args.tool_only.or(cfg.tool_only).unwrap_or(0)),
        (Layout::FloorOnly, args.floor_only.or(cfg.floor_only).unwrap_or(0)),
        (Layout::Neither, args.neither.or(cfg.neither).unwrap_or(0)),
        (Layout::PipeLeakPositive, args.pipe_pos.or(cfg.pipe_pos).unwrap_or(0)),
        (Layout::PipeLeakFar, args.pipe_far.or(cfg.pipe_far).unwrap_or(0)),
    ];
    let config = DatasetConfig {
        rng: RNG_NAME.into(),
        base_seed: args.seed.or(cfg.seed).unwrap_or(7),
        counts: counts.into_iter().filter(|&(_, n)| n > 0).collect(),
        scene: SceneSpec {
            size: args.size.or(cfg.size).unwrap_or(defaults.size),
            noise: args.noise.or(cfg.noise).unwrap_or(defaults.noise),
            blob: (
                args.blob_min.or(cfg.blob_min).unwrap_or(defaults.blob.0),
                args.blob_max.or(cfg.blob_max).unwrap_or(defaults.blob.1),
            ),
            ..defaults
        },
    };
    config.scene.check().map_err(invalid)?;
    let entries = gen_dataset(&config, out)?;
    eprintln!("wrote {} scenes to {}", entries.len(), out.display());
    Ok(())
}

fn cmd_render(engine: &EngineArgs, bundle: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_config(engine.config.as_deref())?;
    let bundle = read_bundle(require(bundle.or(cfg.bundle.as_deref()), "bundle")?)?;
    let out = require(out.or(cfg.out.as_deref()), "out")?;
    let config_map = if engine.query.is_some() || cfg.query.is_some() {
        let eng = Engine::resolve(engine, &cfg)?;
        let pyramid = build_pyramid(&bundle, &eng.params.grounding).map_err(invalid)?;
        let result = infer_multiscale(&eng.query, &pyramid, &eng.params.infer).map_err(invalid)?;
        Some(cells_pgm(pyramid[&result.sigma].grid(), &result.cells))
    } else {
        None
    };
    render_dir(out, &bundle, config_map)
}

fn cmd_validate(engine: &EngineArgs, bundle: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_config(engine.config.as_deref())?;
    let mut problems = Vec::new();
    let query = engine.query.as_deref().or(cfg.query.as_deref());
    let bundle = bundle.or(cfg.bundle.as_deref());
    if query.is_none() && bundle.is_none() {
        return Err(invalid("nothing to validate: pass --query and/or --bundle"));
    }
    if let Some(q) = query {
        let program = load_program(Some(q), engine.prelude.as_deref().or(cfg.prelude.as_deref()))?;
        let violations = validate(&program);
        if violations.is_empty() {
            println!(
                "{}: ok ({} rules, {} queries)",
                q.display(),
                program.rules.len(),
                program.queries.len()
            );
        }
        problems.extend(violations.iter().map(|v| format!("{}:{v}", q.display())));
    }
    if let Some(b) = bundle {
        match read_bundle(b) {
            Ok(bundle) => {
                let (h, w) = bundle.dims().unwrap_or((0, 0));
                println!("{}: ok ({} symbols, {h}x{w})", b.display(), bundle.heatmaps().len());
            }
            Err(e) if e.is_io() => return Err(e.into()),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(invalid(problems.join("\n")))
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Infer {
            engine,
            bundle,
            out,
            render,
        } => cmd_infer(&engine, bundle.as_deref(), out.as_deref(), render.as_deref()),
        Command::Eval {
            engine,
            dataset,
            mode,
            sigma,
            out,
        } => cmd_eval(&engine, dataset.as_deref(), mode.as_deref(), sigma, out.as_deref()),
        Command::Synth(args) => cmd_synth(&args),
        Command::Render { engine, bundle, out } => cmd_render(&engine, bundle.as_deref(), out.as_deref()),
        Command::Validate { engine, bundle } => cmd_validate(&engine, bundle.as_deref()),
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
