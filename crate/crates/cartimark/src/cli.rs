//! The `cartimark` command line.
//!
//! Every stage writes into its own output directory, by default
//! `<data-dir>/runs/<timestamp>/<stage>/`, together with `outputs.json`
//! listing the produced files and their SHA-256. Files are staged in a
//! hidden sibling directory and moved into place only on success, so a
//! failed run leaves nothing behind. Errors go to stderr as one JSON object
//! `{code, message}`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use cartimark_core::backbone::BackboneSpec;
use cartimark_core::grid::HyperGrid;
use cartimark_core::overlay::{Colormap, DEFAULT_ALPHA};
use cartimark_core::phantom::PhantomConfig;
use cartimark_core::split::{split_dataset, SplitRatios};
use cartimark_core::svm::{FusionMode, SvmConfig};
use cartimark_core::train::TrainConfig;
use cartimark_core::{Subset, View};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{generate_phantoms, load_split, save_split, validate_files, Dataset};
use crate::error::{AppError, Result};
use crate::fsutil::{read_json, sha256_file, write_atomic, write_json};
use crate::fusion_model::{train_fusion, AnyModel};
use crate::models::{grid_search, read_predictions, train_single_view, write_predictions, LoadedModel};
use crate::report::{evaluate, table2_report, EvaluationReport, Truth};
use crate::resolver::Resolver;
use crate::service::{serve, AppState, ModelRegistry, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "cartimark", version, about = "Cartilage-defect classifiers, fusion, saliency, diagnostics and reader studies")]
pub struct Cli {
    /// TOML or JSON file whose keys mirror the flags; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: <data-dir>/runs/<timestamp>/<stage>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "CARTIMARK_DATA_DIR", default_value = "cartimark-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub frozen_fraction: f64,
    #[arg(long)]
    pub augment: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value = "tiny-test")]
    pub backbone: String,
    #[arg(long, default_value_t = 32)]
    pub input_size: usize,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            frozen_fraction: self.frozen_fraction,
            augment: self.augment,
            seed: self.seed,
            threshold: self.threshold,
        }
    }

    fn backbone(&self) -> Result<BackboneSpec> {
        match self.backbone.as_str() {
            "tiny-test" => Ok(BackboneSpec::tiny_test(self.input_size)),
            "xception" => Ok(BackboneSpec::xception()),
            other => Err(AppError::Usage(format!("unknown backbone `{other}`"))),
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dual-view phantom dataset.
    Phantom {
        #[arg(long, default_value_t = 60)]
        n_patients: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        prevalence: f64,
        #[arg(long, default_value_t = 32)]
        image_size: usize,
        #[arg(long, default_value_t = 0.02)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 3.0)]
        radius_min: f64,
        #[arg(long, default_value_t = 5.0)]
        radius_max: f64,
    },
    /// Check a manifest and its image files.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Patient-level train/validation/test split.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "0.8,0.1,0.1")]
        ratios: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Plain random split instead of class-stratified.
        #[arg(long)]
        no_stratify: bool,
    },
    /// Train a single-view classifier.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        view: View,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Grid search over training hyperparameters for one view.
    GridSearch {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        view: View,
        /// `name=v1,v2;name=v3`; defaults to the built-in grid.
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Fit the dual-view SVM on two single-view models.
    FuseTrain {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        sagittal: PathBuf,
        #[arg(long)]
        coronal: PathBuf,
        #[arg(long = "c", default_value_t = 1.0)]
        c: f64,
        /// Candidate C values picked by validation accuracy; empty to use --c.
        #[arg(long, default_value = "0.01,0.1,1,10,100")]
        c_grid: String,
        #[arg(long, default_value = "feature")]
        fusion_mode: String,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long, default_value_t = 1000)]
        max_passes: usize,
    },
    /// Score a dataset (or one split subset) with a model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        subset: Option<Subset>,
    },
    /// Saliency maps and overlays for one patient.
    Saliency {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "jet")]
        colormap: String,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Diagnostic report for prediction files against ground truth.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        predictions: Vec<PathBuf>,
        /// A manifest path, or `table2` for the bundled reading table.
        #[arg(long)]
        truth: String,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        subset: Option<Subset>,
    },
    /// Recompute the published summary table from the bundled reading table.
    ReproduceTables,
    /// ROC figure (SVG) from a report's plot data.
    RocPlot {
        /// Report JSON; defaults to the bundled reading table.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the reader-study HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// `name=manifest.json,split.json`; repeatable.
        #[arg(long)]
        dataset: Vec<String>,
        /// Model sidecar or fusion file; repeatable.
        #[arg(long)]
        model: Vec<PathBuf>,
        #[arg(long, env = "CARTIMARK_API_TOKEN")]
        token: Option<String>,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Phantom { .. } => "phantom",
            Command::Validate { .. } => "validate",
            Command::Split { .. } => "split",
            Command::Train { .. } => "train",
            Command::GridSearch { .. } => "grid-search",
            Command::FuseTrain { .. } => "fuse-train",
            Command::Predict { .. } => "predict",
            Command::Saliency { .. } => "saliency",
            Command::Evaluate { .. } => "evaluate",
            Command::ReproduceTables => "reproduce-tables",
            Command::RocPlot { .. } => "roc-plot",
            Command::Serve { .. } => "serve",
        }
    }
}

/// Converts a config file into flags for `subcommand`. A table named after
/// the subcommand takes precedence over top-level keys.
fn config_flags(path: &Path, subcommand: &str) -> Result<Vec<OsString>> {
    let text = fs::read_to_string(path).map_err(AppError::io(path))?;
    let value: serde_json::Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| AppError::parse(path, e))?
    } else {
        let t: toml::Value = toml::from_str(&text).map_err(|e| AppError::parse(path, e))?;
        serde_json::to_value(t).map_err(|e| AppError::parse(path, e))?
    };
    let root = value.as_object().ok_or_else(|| AppError::parse(path, "config must be a table"))?;
    let table = match root.get(subcommand).or_else(|| root.get(&subcommand.replace('-', "_"))) {
        Some(serde_json::Value::Object(t)) => t.clone(),
        _ => root.iter().filter(|(_, v)| !v.is_object()).map(|(k, v)| (k.clone(), v.clone())).collect(),
    };
    let mut flags = Vec::new();
    for (key, v) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        match v {
            serde_json::Value::Bool(true) => flags.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                for item in &items {
                    flags.push(flag.clone().into());
                    flags.push(scalar(item).into());
                }
            }
            other => {
                flags.push(flag.into());
                flags.push(scalar(&other).into());
            }
        }
    }
    Ok(flags)
}

fn find_config(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn parse(argv: Vec<OsString>) -> std::result::Result<Cli, clap::Error> {
    let cmd = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let matches = cmd.try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

/// Injects config-file flags right after the subcommand so that explicit
/// flags, which come later, override them.
fn expand_argv(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(config) = find_config(&argv) else { return Ok(argv) };
    let names: Vec<String> = Cli::command().get_subcommands().map(|s| s.get_name().to_string()).collect();
    let Some(pos) = argv.iter().position(|a| names.iter().any(|n| a.to_string_lossy() == *n)) else {
        return Ok(argv);
    };
    let sub = argv[pos].to_string_lossy().to_string();
    let mut out = argv[..=pos].to_vec();
    out.extend(config_flags(&config, &sub)?);
    out.extend(argv[pos + 1..].iter().cloned());
    Ok(out)
}

#[derive(Debug, Serialize)]
struct OutputFile {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct OutputsManifest {
    stage: String,
    files: Vec<OutputFile>,
}

/// A stage's output directory, staged at a hidden sibling until committed.
struct StageDir {
    final_dir: PathBuf,
    work: PathBuf,
    /// The timestamped run directory, when this stage created it.
    run_dir: Option<PathBuf>,
}

impl StageDir {
    fn new(cli: &Cli, stage: &str) -> Result<Self> {
        let (final_dir, run_dir) = match &cli.out {
            Some(o) => (o.clone(), None),
            None => {
                let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string();
                let run = cli.data_dir.join("runs").join(stamp);
                (run.join(stage), Some(run))
            }
        };
        if final_dir.exists() && fs::read_dir(&final_dir).map_err(AppError::io(&final_dir))?.next().is_some() {
            return Err(AppError::OutputExists(final_dir));
        }
        let parent = final_dir.parent().map(Path::to_path_buf).unwrap_or_default();
        let name = final_dir.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_else(|| stage.into());
        let work = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if work.exists() {
            fs::remove_dir_all(&work).map_err(AppError::io(&work))?;
        }
        fs::create_dir_all(&work).map_err(AppError::io(&work))?;
        Ok(StageDir { final_dir, work, run_dir })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.work.join(rel)
    }

    fn commit(self, stage: &str) -> Result<PathBuf> {
        let mut files = Vec::new();
        collect(&self.work, &self.work, &mut files)?;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        write_json(&self.work.join("outputs.json"), &OutputsManifest { stage: stage.into(), files })?;
        if self.final_dir.exists() {
            fs::remove_dir(&self.final_dir).map_err(AppError::io(&self.final_dir))?;
        }
        fs::rename(&self.work, &self.final_dir).map_err(AppError::io(&self.final_dir))?;
        Ok(self.final_dir.clone())
    }

    fn abandon(&self) {
        let _ = fs::remove_dir_all(&self.work);
        if let Some(run) = &self.run_dir {
            // Only succeeds if nothing else was written there.
            let _ = fs::remove_dir(run);
        }
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<OutputFile>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(AppError::io(dir))? {
        let p = entry.map_err(AppError::io(dir))?.path();
        if p.is_dir() {
            collect(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("inside root").to_string_lossy().replace('\\', "/");
            let bytes = fs::metadata(&p).map_err(AppError::io(&p))?.len();
            out.push(OutputFile { path: rel, sha256: sha256_file(&p)?, bytes });
        }
    }
    Ok(())
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| AppError::Usage(format!("`{s}` is not a number"))))
        .collect()
}

fn fusion_mode(s: &str) -> Result<FusionMode> {
    match s {
        "feature" => Ok(FusionMode::Feature),
        "score" => Ok(FusionMode::Score),
        other => Err(AppError::Usage(format!("unknown fusion mode `{other}`"))),
    }
}

fn load_truth(truth: &str, split: Option<&Path>, subset: Option<Subset>) -> Result<Truth> {
    if truth == "table2" {
        return Ok(Truth::table2(&cartimark_core::table2::Table2Dataset::bundled()?));
    }
    let data = Dataset::open(Path::new(truth))?;
    let split = split.map(load_split).transpose()?;
    Truth::from_dataset(&data, split.as_ref(), subset)
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serialisable"));
}

/// Outcome of a stage body: what to print and the exit code.
struct Done {
    summary: serde_json::Value,
    exit: i32,
}

fn ok(summary: serde_json::Value) -> Result<Done> {
    Ok(Done { summary, exit: 0 })
}

fn run_stage(cli: &Cli, out: &StageDir) -> Result<Done> {
    match &cli.command {
        Command::Phantom { n_patients, seed, prevalence, image_size, noise_sigma, radius_min, radius_max } => {
            let config = PhantomConfig {
                n_patients: *n_patients,
                seed: *seed,
                defect_prevalence: *prevalence,
                image_size: *image_size,
                noise_sigma: *noise_sigma,
                defect_radius_range: [*radius_min, *radius_max],
            };
            config.validate()?;
            let m = generate_phantoms(&config, &out.work)?;
            write_json(&out.path("phantom_config.json"), &config)?;
            let (d, n) = m.class_counts();
            ok(serde_json::json!({ "records": m.records.len(), "defect": d, "no_defect": n }))
        }
        Command::Validate { manifest } => {
            let data = Dataset::open(manifest)?;
            let violations = validate_files(&data.manifest, &data.base_dir);
            write_json(&out.path("violations.json"), &violations)?;
            Ok(Done {
                exit: i32::from(!violations.is_empty()),
                summary: serde_json::json!({ "violations": violations.len() }),
            })
        }
        Command::Split { manifest, ratios, seed, no_stratify } => {
            let r = parse_list(ratios)?;
            if r.len() != 3 {
                return Err(AppError::Usage("--ratios takes three comma-separated fractions".into()));
            }
            let ratios = SplitRatios::new(r[0], r[1], r[2])?;
            let data = Dataset::open(manifest)?;
            let split = split_dataset(&data.manifest, ratios, *seed, !no_stratify)?;
            save_split(&out.path("split.json"), &split)?;
            ok(serde_json::json!({
                "train": split.count(Subset::Train),
                "validation": split.count(Subset::Validation),
                "test": split.count(Subset::Test),
            }))
        }
        Command::Train { data, view, train } => {
            let spec = train.backbone()?;
            let config = train.config();
            config.validate()?;
            let dataset = Dataset::open(&data.manifest)?;
            let split = load_split(&data.split)?;
            let m = train_single_view(&dataset, &split, *view, &config, &spec, &mut |_| {})?;
            m.save(&out.work)?;
            ok(serde_json::json!({
                "model_id": m.artifact.model_id,
                "validation_accuracy": m.artifact.validation_metrics.as_ref().map(|r| r.accuracy),
            }))
        }
        Command::GridSearch { data, view, grid, train } => {
            let spec = train.backbone()?;
            let grid = match grid {
                Some(g) => HyperGrid::parse(g)?,
                None => HyperGrid::default(),
            };
            let dataset = Dataset::open(&data.manifest)?;
            let split = load_split(&data.split)?;
            let (config, m, board) = grid_search(&dataset, &split, *view, &grid, &train.config(), &spec)?;
            m.save(&out.work)?;
            write_json(&out.path("leaderboard.json"), &board)?;
            ok(serde_json::json!({ "model_id": m.artifact.model_id, "best": board.best_index, "config": config }))
        }
        Command::FuseTrain { data, sagittal, coronal, c, c_grid, fusion_mode: mode, tolerance, max_passes } => {
            let config = SvmConfig {
                kernel: "linear".into(),
                c: *c,
                tolerance: *tolerance,
                max_passes: *max_passes,
                fusion_mode: fusion_mode(mode)?,
            };
            config.validate()?;
            let grid = parse_list(c_grid)?;
            let dataset = Dataset::open(&data.manifest)?;
            let split = load_split(&data.split)?;
            let f = train_fusion(&dataset, &split, LoadedModel::load(sagittal)?, LoadedModel::load(coronal)?, &config, &grid)?;
            f.save(&out.work)?;
            ok(serde_json::json!({
                "model_id": f.file.model_id,
                "C": f.file.svm.config.c,
                "validation_accuracy": f.file.validation_metrics.as_ref().map(|r| r.accuracy),
            }))
        }
        Command::Predict { model, manifest, split, subset } => {
            let m = AnyModel::load(model)?;
            let data = Dataset::open(manifest)?;
            let split = split.as_deref().map(load_split).transpose()?;
            let subset = match (&split, subset) {
                (Some(_), None) => Some(Subset::Test),
                (_, s) => *s,
            };
            if subset.is_some() && split.is_none() {
                return Err(AppError::Usage("--subset needs --split".into()));
            }
            let records = m.predict_dataset(&data, &data.members(split.as_ref(), subset))?;
            write_predictions(&out.path("predictions.jsonl"), &records)?;
            ok(serde_json::json!({ "model_id": m.model_id(), "records": records.len() }))
        }
        Command::Saliency { model, patient, manifest, colormap, alpha } => {
            let colormap = Colormap::parse(colormap)?;
            if !(0.0..=1.0).contains(alpha) {
                return Err(AppError::Usage("--alpha must lie in [0, 1]".into()));
            }
            let m = AnyModel::load(model)?;
            let data = Dataset::open(manifest)?;
            let maps = crate::saliency_io::compute_saliency(&m, &data, patient)?;
            let files = crate::saliency_io::write_saliency(&maps, &data, colormap, *alpha, &out.work)?;
            ok(serde_json::json!({ "maps": maps.len(), "files": files.len() }))
        }
        Command::Evaluate { predictions, truth, split, subset } => {
            let truth = load_truth(truth, split.as_deref(), *subset)?;
            let mut records = Vec::new();
            for p in predictions {
                records.extend(read_predictions(p)?);
            }
            let report = evaluate(&records, &truth)?;
            write_json(&out.path("report.json"), &report)?;
            let acc: serde_json::Map<String, serde_json::Value> =
                report.rows.iter().map(|r| (r.rater_id.clone(), r.accuracy.into())).collect();
            ok(serde_json::json!({ "accuracy": acc }))
        }
        Command::ReproduceTables => {
            let started = Instant::now();
            let report = table2_report()?;
            let audit = report.audit.as_ref().expect("table report carries an audit");
            write_json(&out.path("report.json"), &report)?;
            for r in &audit.raters {
                eprintln!(
                    "{:<9} accuracy {:6.2}% (published {:6.2}%) audit {}",
                    r.rater_id,
                    100.0 * r.standard.accuracy,
                    100.0 * r.published.accuracy,
                    if r.audit.iter().all(|c| c.pass) { "pass" } else { "FAIL" }
                );
            }
            Ok(Done {
                exit: i32::from(!audit.all_pass),
                summary: serde_json::json!({
                    "all_pass": audit.all_pass,
                    "accuracy_pass": audit.accuracy_pass,
                    "audit_pass": audit.audit_pass,
                    "elapsed_ms": started.elapsed().as_millis() as u64,
                }),
            })
        }
        Command::RocPlot { report } => {
            let report: EvaluationReport = match report {
                Some(p) => read_json(p)?,
                None => table2_report()?,
            };
            write_atomic(&out.path("roc.svg"), crate::plot::roc_svg(&report.plot).as_bytes())?;
            ok(serde_json::json!({ "curves": report.plot.curves.len(), "rater_points": report.plot.rater_points.len() }))
        }
        Command::Serve { .. } => unreachable!("serve has no stage directory"),
    }
}

fn run_serve(cli: &Cli) -> Result<()> {
    let Command::Serve { port, host, dataset, model, token } = &cli.command else { unreachable!() };
    let mut resolver = Resolver::default();
    for spec in dataset {
        let (name, files) = spec
            .split_once('=')
            .and_then(|(n, f)| f.split_once(',').map(|(m, s)| (n, (m, s))))
            .ok_or_else(|| AppError::Usage(format!("--dataset expects name=manifest,split, got `{spec}`")))?;
        resolver.register(name, Path::new(files.0), Path::new(files.1))?;
    }
    let mut models = ModelRegistry::default();
    for m in model {
        models.register(m)?;
    }
    let addr: std::net::SocketAddr =
        format!("{host}:{port}").parse().map_err(|_| AppError::Usage(format!("bad address {host}:{port}")))?;
    let state = Arc::new(AppState::new(
        ServiceConfig { root: cli.data_dir.clone(), api_token: token.clone() },
        resolver,
        models,
    )?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::Storage(e.to_string()))?;
    rt.block_on(serve(state, addr))
}

fn report_error(e: &AppError) {
    eprintln!("{}", serde_json::to_string(&e.body()).expect("serialisable"));
}

/// Runs one command line and returns the process exit code.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let argv: Vec<OsString> = args.into_iter().collect();
    let argv = match expand_argv(argv) {
        Ok(a) => a,
        Err(e) => {
            report_error(&e);
            return 2;
        }
    };
    let cli = match parse(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            report_error(&AppError::Usage(e.render().to_string().trim().to_string()));
            return 2;
        }
    };
    if let Command::Serve { .. } = cli.command {
        return match run_serve(&cli) {
            Ok(()) => 0,
            Err(e) => {
                report_error(&e);
                2
            }
        };
    }
    let stage = cli.command.stage();
    let out = match StageDir::new(&cli, stage) {
        Ok(o) => o,
        Err(e) => {
            report_error(&e);
            return 2;
        }
    };
    match run_stage(&cli, &out) {
        Ok(done) => match out.commit(stage) {
            Ok(dir) => {
                print_json(&serde_json::json!({ "stage": stage, "out_dir": dir, "result": done.summary }));
                done.exit
            }
            Err(e) => {
                report_error(&e);
                2
            }
        },
        Err(e) => {
            out.abandon();
            report_error(&e);
            2
        }
    }
}
