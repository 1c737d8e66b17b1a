//! The `arnet` command line: `gen`, `train`, `infer` and `eval`.
//!
//! Every command writes a run manifest next to its outputs recording the
//! arguments, the resolved configuration, seeds, paths and wall-clock time.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::write_atomic;
use crate::datagen::{default_taxonomy, gen_dataset, parse_scenes, write_scenes, GenConfig, SceneRecord, Taxonomy};
use crate::error::{Error, Result};
use crate::eval::{evaluate_dataset, MatchMode};
use crate::inference::{
    build_mrg, export_dot, export_json, infer_triplets, ConfidenceSource, InferenceConfig, RelationshipClassTable,
    RelationshipTriplet, DEFAULT_MIN_SCORE, DEFAULT_NMS_THRESHOLD,
};
use crate::model::ModelParameters;
use crate::training::{history_csv, train_with_progress, TrainConfig};

/// Environment variable holding the worker thread count for `infer` and
/// `eval`. Unset or 0 means one thread per core.
pub const THREADS_ENV: &str = "ARNET_THREADS";

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "arnet", version, about = "Manipulation relationship graphs from object proposals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/test dataset.
    Gen(GenArgs),
    /// Train a model on <data>/train.jsonl.
    Train(TrainArgs),
    /// Build a relationship graph for every scene of a JSONL file or directory.
    Infer(InferArgs),
    /// Recall@K of a model (or of saved predictions) on a dataset split.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Number of training scenes.
    #[arg(long = "train", default_value_t = 200)]
    pub n_train: usize,
    /// Number of test scenes.
    #[arg(long = "test", default_value_t = 40)]
    pub n_test: usize,
    /// Taxonomy JSON to use instead of the built-in kitchen taxonomy.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Feature dimension of the built-in taxonomy.
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Standard deviation of the per-component feature noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Archetypes kept out of the training split, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub holdout: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory containing train.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    /// Training configuration JSON; the flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Epochs [default: 15].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for initialization and sampling [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file to write. The loss history goes to <stem>.loss.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Do not print per-epoch progress.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Confidence {
    Objectness,
    Proposal,
    Role,
}

impl From<Confidence> for ConfidenceSource {
    fn from(c: Confidence) -> Self {
        match c {
            Confidence::Objectness => ConfidenceSource::Objectness,
            Confidence::Proposal => ConfidenceSource::Proposal,
            Confidence::Role => ConfidenceSource::Role,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    /// IoU threshold of triplet NMS.
    #[arg(long, default_value_t = DEFAULT_NMS_THRESHOLD)]
    pub nms: f64,
    /// Source of subject/object confidences in triplet scores.
    #[arg(long, value_enum, default_value_t = Confidence::Objectness)]
    pub confidence: Confidence,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// A scene JSONL file, or a directory whose *.jsonl files are all read.
    #[arg(long)]
    pub scene: PathBuf,
    /// Output directory; one <scene_id>.mrg.json per scene.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write <scene_id>.mrg.dot.
    #[arg(long)]
    pub dot: bool,
    /// Edges scoring below this are left out of the graph.
    #[arg(long, default_value_t = DEFAULT_MIN_SCORE)]
    pub min_score: f64,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file. Not needed with --predictions.
    #[arg(long, required_unless_present = "predictions")]
    pub model: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Which split of the dataset to score.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Comma-separated K values, e.g. "1,5".
    #[arg(long, value_delimiter = ',', default_value = "1,5", value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Vec<u64>,
    /// Comma-separated match modes: phrase, relationship, or both.
    #[arg(long, default_value = "phrase,relationship", value_parser = parse_modes)]
    pub mode: ModeList,
    /// Report CSV. A text table goes to <stem>.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Score triplets saved by an earlier --save-predictions run instead of a model.
    #[arg(long, conflicts_with = "model")]
    pub predictions: Option<PathBuf>,
    /// Write the scored triplets as JSONL for later replay.
    #[arg(long)]
    pub save_predictions: Option<PathBuf>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeList(pub Vec<MatchMode>);

fn parse_modes(s: &str) -> std::result::Result<ModeList, String> {
    let mut modes = Vec::new();
    for part in s.split(',') {
        let new = match part.trim().to_ascii_lowercase().as_str() {
            "both" | "all" => vec![MatchMode::Phrase, MatchMode::Relationship],
            other => vec![other.parse::<MatchMode>().map_err(|e| e.to_string())?],
        };
        for m in new {
            if !modes.contains(&m) {
                modes.push(m);
            }
        }
    }
    Ok(ModeList(modes))
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub version: String,
}

impl RunManifest {
    fn new(command: &str, arguments: &[String]) -> Self {
        Self {
            command: command.to_string(),
            arguments: arguments.to_vec(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
            version: format!("arnet {}", env!("CARGO_PKG_VERSION")),
        }
    }

    fn finish(mut self, path: &Path, started: Instant) -> Result<()> {
        self.wall_clock_seconds = started.elapsed().as_secs_f64();
        write_atomic(path, pretty(&self)?.as_bytes())
    }
}

/// Maps an error to the process exit status.
pub fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else if matches!(err, Error::Config(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Help and version requests exit 0, bad usage exits 1.
pub fn main_from_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, &argv) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(cli: Cli, argv: &[String]) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, argv),
        Command::Train(a) => cmd_train(&a, argv),
        Command::Infer(a) => with_pool(|| cmd_infer(&a, argv)),
        Command::Eval(a) => with_pool(|| cmd_eval(&a, argv)),
    }
}

fn with_pool<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))?,
        _ => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// `<dir>/<stem><suffix>` for a file path, e.g. `model.json` → `model.loss.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => Ok(fs::create_dir_all(p)?),
        _ => Ok(()),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

fn read_scenes(path: &Path) -> Result<Vec<SceneRecord>> {
    parse_scenes(&read_text(path)?).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn read_model(path: &Path) -> Result<ModelParameters> {
    ModelParameters::from_json(&read_text(path)?)
}

pub fn cmd_gen(args: &GenArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let taxonomy: Taxonomy = match &args.taxonomy {
        Some(p) => serde_json::from_str(&read_text(p)?)?,
        None => default_taxonomy(args.seed, args.dim),
    };
    let cfg = GenConfig {
        noise_sigma: args.noise,
        holdout: args.holdout.clone(),
        ..GenConfig::default()
    };
    let ds = gen_dataset(&taxonomy, &cfg, args.n_train, args.n_test, args.seed)?;

    fs::create_dir_all(&args.out)?;
    let paths = ["taxonomy.json", "train.jsonl", "test.jsonl", "manifest.json"].map(|n| args.out.join(n));
    write_atomic(&paths[0], pretty(&taxonomy)?.as_bytes())?;
    write_scenes(&paths[1], &ds.train)?;
    write_scenes(&paths[2], &ds.test)?;
    write_atomic(&paths[3], pretty(&ds.manifest)?.as_bytes())?;

    let mut m = RunManifest::new("gen", argv);
    m.config = serde_json::to_value(&cfg)?;
    m.seeds.insert("dataset".into(), args.seed);
    m.inputs = args.taxonomy.iter().map(|p| display(p)).collect();
    m.outputs = paths.iter().map(|p| display(p)).collect();
    m.finish(&args.out.join("run.json"), started)
}

pub fn cmd_train(args: &TrainArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => serde_json::from_str(&read_text(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.initial_lr = lr;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let train_path = args.data.join("train.jsonl");
    let scenes = read_scenes(&train_path)?;
    if let Some(o) = scenes.iter().flat_map(|s| &s.objects).next() {
        cfg.model.input_dim = o.feature.len();
    }
    cfg.validate()?;

    let outcome = train_with_progress(&scenes, &cfg, |e| {
        if !args.quiet {
            eprintln!(
                "epoch {:>3}/{}  loss {:.4}  (rel {:.4}  att {:.4}  obj {:.4})  lr {}",
                e.epoch, cfg.epochs, e.mean_loss, e.relationship_loss, e.attribute_loss, e.objectness_loss, e.lr
            );
        }
    })?;

    ensure_parent(&args.out)?;
    let loss_path = sibling(&args.out, ".loss.csv");
    write_atomic(&args.out, outcome.params.to_json()?.as_bytes())?;
    write_atomic(&loss_path, history_csv(&outcome.history).as_bytes())?;

    let mut m = RunManifest::new("train", argv);
    m.config = serde_json::to_value(&cfg)?;
    m.seeds.insert("training".into(), cfg.seed);
    m.inputs = vec![display(&train_path)];
    m.outputs = vec![display(&args.out), display(&loss_path)];
    m.finish(&sibling(&args.out, ".run.json"), started)
}

fn scene_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no .jsonl files in {}", path.display())));
    }
    Ok(files)
}

/// Scene ids become file names; anything outside `[A-Za-z0-9._-]` is replaced.
fn file_stem_for(scene_id: &str) -> String {
    let s: String = scene_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with('.') {
        format!("scene{s}")
    } else {
        s
    }
}

fn inference_config(scoring: &ScoringArgs, min_score: f64) -> Result<InferenceConfig> {
    if !(scoring.nms > 0.0 && scoring.nms <= 1.0) {
        return Err(Error::Config(format!("--nms must be in (0, 1], got {}", scoring.nms)));
    }
    if !min_score.is_finite() || min_score < 0.0 {
        return Err(Error::Config(format!("--min-score must be a non-negative number, got {min_score}")));
    }
    Ok(InferenceConfig {
        nms_threshold: scoring.nms,
        min_score,
        confidence: scoring.confidence.into(),
    })
}

pub fn cmd_infer(args: &InferArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let cfg = inference_config(&args.scoring, args.min_score)?;
    let params = read_model(&args.model)?;
    let files = scene_files(&args.scene)?;
    let mut scenes = Vec::new();
    for f in &files {
        scenes.extend(read_scenes(f)?);
    }
    let mut stems: Vec<String> = scenes.iter().map(|s| file_stem_for(&s.scene_id)).collect();
    stems.sort();
    if let Some(w) = stems.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Data(format!("two scenes map to the output name {}", w[0])));
    }

    fs::create_dir_all(&args.out)?;
    let classes = RelationshipClassTable::default();
    let outputs: Vec<Vec<String>> = scenes
        .par_iter()
        .map(|scene| {
            let (nodes, triplets) = infer_triplets(&params, &scene.proposals(), &cfg)?;
            let mrg = build_mrg(nodes, &triplets, cfg.min_score)?;
            let stem = file_stem_for(&scene.scene_id);
            let json_path = args.out.join(format!("{stem}.mrg.json"));
            write_atomic(&json_path, export_json(&mrg, &classes)?.as_bytes())?;
            let mut written = vec![display(&json_path)];
            if args.dot {
                let dot_path = args.out.join(format!("{stem}.mrg.dot"));
                write_atomic(&dot_path, export_dot(&mrg, &classes)?.as_bytes())?;
                written.push(display(&dot_path));
            }
            Ok(written)
        })
        .collect::<Result<_>>()?;

    let mut m = RunManifest::new("infer", argv);
    m.config = serde_json::to_value(cfg)?;
    m.inputs = std::iter::once(display(&args.model)).chain(files.iter().map(|f| display(f))).collect();
    m.outputs = outputs.into_iter().flatten().collect();
    m.finish(&args.out.join("run.json"), started)
}

/// One line of a saved-predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePredictions {
    pub scene_id: String,
    pub triplets: Vec<RelationshipTriplet>,
}

fn read_predictions(path: &Path, scenes: &[SceneRecord]) -> Result<Vec<Vec<RelationshipTriplet>>> {
    let text = read_text(path)?;
    let mut by_id = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let p: ScenePredictions = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if by_id.insert(p.scene_id.clone(), p.triplets).is_some() {
            return Err(Error::Data(format!("scene {} appears twice in {}", p.scene_id, path.display())));
        }
    }
    scenes
        .iter()
        .map(|s| {
            by_id
                .remove(&s.scene_id)
                .ok_or_else(|| Error::Data(format!("no predictions for scene {}", s.scene_id)))
        })
        .collect()
}

pub fn cmd_eval(args: &EvalArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let cfg = inference_config(&args.scoring, 0.0)?;
    if args.mode.0.is_empty() {
        return Err(Error::Config("--mode needs at least one mode".into()));
    }
    let data_path = args.data.join(format!("{}.jsonl", args.split));
    let scenes = read_scenes(&data_path)?;
    let mut inputs = vec![display(&data_path)];

    let predictions: Vec<Vec<RelationshipTriplet>> = match (&args.predictions, &args.model) {
        (Some(p), _) => {
            inputs.push(display(p));
            read_predictions(p, &scenes)?
        }
        (None, Some(model)) => {
            inputs.push(display(model));
            let params = read_model(model)?;
            scenes
                .par_iter()
                .map(|s| infer_triplets(&params, &s.proposals(), &cfg).map(|(_, t)| t))
                .collect::<Result<_>>()?
        }
        (None, None) => return Err(Error::Config("either --model or --predictions is required".into())),
    };

    let k_list: Vec<usize> = args.k.iter().map(|&k| k as usize).collect();
    let report = evaluate_dataset(&predictions, &scenes, &k_list, &args.mode.0)?;
    let table = report.to_table();
    print!("{table}");

    ensure_parent(&args.out)?;
    let table_path = sibling(&args.out, ".txt");
    write_atomic(&args.out, report.to_csv().as_bytes())?;
    write_atomic(&table_path, table.as_bytes())?;
    let mut outputs = vec![display(&args.out), display(&table_path)];
    if let Some(p) = &args.save_predictions {
        ensure_parent(p)?;
        let mut text = String::new();
        for (scene, triplets) in scenes.iter().zip(&predictions) {
            let line = ScenePredictions {
                scene_id: scene.scene_id.clone(),
                triplets: triplets.clone(),
            };
            text.push_str(&serde_json::to_string(&line)?);
            text.push('\n');
        }
        write_atomic(p, text.as_bytes())?;
        outputs.push(display(p));
    }

    let mut m = RunManifest::new("eval", argv);
    m.config = serde_json::json!({
        "split": args.split,
        "k": k_list,
        "modes": args.mode.0.iter().map(|m| m.name()).collect::<Vec<_>>(),
        "inference": cfg,
    });
    m.inputs = inputs;
    m.outputs = outputs;
    m.finish(&sibling(&args.out, ".run.json"), started)
}
