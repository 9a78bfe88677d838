//! Command-line front end: per-model track evaluation, hyperparameter grids,
//! and the cross-model correlation report.
//!
//! Exit codes: 0 success, 1 I/O, 2 data validation, 3 statistical precondition.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate_clf, train_head, HeadFile, TrainConfig};
use crate::dataset::{load_labels_any, Hypothesis};
use crate::error::{Error, Result};
use crate::similarity::{evaluate_sim, TrackResult};
use crate::stats::{correlate_runs, ranked_table, read_runs_csv, runs_to_csv, ModelRun};
use crate::store::{read_embedding_store, EmbeddingStore};

#[derive(Debug, Parser)]
#[command(
    name = "abduct-rank",
    version,
    about = "Rank frozen encoders for abductive NLI by cosine-similarity accuracy"
)]
pub struct Cli {
    /// Write 0 for every wall-clock field so outputs are byte-reproducible.
    #[arg(long, global = true)]
    pub no_timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the similarity track on a pooled store.
    PredictSim(PredictSimArgs),
    /// Train a classification head and evaluate it on a dev store.
    TrainHead(TrainHeadArgs),
    /// Train every grid point for every model in a manifest; keep the best per model.
    Grid(GridArgs),
    /// Correlate similarity and classification accuracy across models.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Args)]
pub struct PredictSimArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Include every instance's scores in the output.
    #[arg(long)]
    pub per_instance: bool,
}

#[derive(Debug, Args)]
pub struct TrainHeadArgs {
    #[arg(long)]
    pub train_embeddings: PathBuf,
    #[arg(long)]
    pub train_labels: PathBuf,
    #[arg(long)]
    pub dev_embeddings: PathBuf,
    #[arg(long)]
    pub dev_labels: PathBuf,
    #[arg(long)]
    pub lr: f64,
    #[arg(long)]
    pub batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::DEFAULT_WEIGHT_DECAY)]
    pub weight_decay: f64,
    #[arg(long, env = "ABDUCT_RANK_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Accept learning rates outside the default grid range.
    #[arg(long)]
    pub allow_any_lr: bool,
    /// Trained head (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Dev-set track result; defaults to `<out>` with a `.result.json` suffix.
    #[arg(long)]
    pub result: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "ABDUCT_RANK_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    let timing = !cli.no_timing;
    match cli.command {
        Command::PredictSim(args) => cmd_predict_sim(&args, timing),
        Command::TrainHead(args) => cmd_train_head(&args, timing),
        Command::Grid(args) => cmd_grid(&args, timing),
        Command::Correlate(args) => cmd_correlate(&args).map(|table| print!("{table}")),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Store plus labels whose count matches the store's instance count.
fn load_labeled(store_path: &Path, labels_path: &Path) -> Result<(EmbeddingStore, Vec<Hypothesis>)> {
    let store = read_embedding_store(store_path)?;
    let labels = load_labels_any(labels_path)?;
    let n = store.instance_count();
    if labels.len() != n {
        return Err(Error::LabelCount {
            expected: n,
            found: labels.len(),
        });
    }
    Ok((store, labels))
}

pub fn cmd_predict_sim(args: &PredictSimArgs, timing: bool) -> Result<()> {
    let (store, labels) = load_labeled(&args.embeddings, &args.labels)?;
    let mut result = evaluate_sim(&store, &labels, args.per_instance)?;
    if !timing {
        result.wall_seconds = 0.0;
    }
    write_file(&args.out, &result.to_json())
}

/// Trains on one split and evaluates on another. `wall_seconds` of the
/// returned result covers training plus evaluation.
fn train_and_evaluate(
    train: (&EmbeddingStore, &[Hypothesis]),
    dev: (&EmbeddingStore, &[Hypothesis]),
    cfg: &TrainConfig,
    timing: bool,
) -> Result<(HeadFile, TrackResult)> {
    if train.0.dim() != dev.0.dim() {
        return Err(Error::Domain(format!(
            "train store dim {} != dev store dim {}",
            train.0.dim(),
            dev.0.dim()
        )));
    }
    let (head, history) = train_head(train.0, train.1, cfg)?;
    let mut result = evaluate_clf(&head, dev.0, dev.1, false)?;
    result.wall_seconds = if timing {
        history.wall_seconds + result.wall_seconds
    } else {
        0.0
    };
    Ok((HeadFile::new(&train.0.model_id, &head, cfg, &history), result))
}

pub fn cmd_train_head(args: &TrainHeadArgs, timing: bool) -> Result<()> {
    let cfg = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        weight_decay: args.weight_decay,
        seed: args.seed,
    };
    cfg.validate()?;
    if !args.allow_any_lr {
        cfg.check_lr_grid()?;
    }
    let (train, train_labels) = load_labeled(&args.train_embeddings, &args.train_labels)?;
    let (dev, dev_labels) = load_labeled(&args.dev_embeddings, &args.dev_labels)?;
    let (head, result) = train_and_evaluate((&train, &train_labels), (&dev, &dev_labels), &cfg, timing)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    head.write(&args.out)?;
    let result_path = args
        .result
        .clone()
        .unwrap_or_else(|| args.out.with_extension("result.json"));
    write_file(&result_path, &result.to_json())
}

/// One hyperparameter combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestModel {
    pub model_id: String,
    pub train_embeddings: PathBuf,
    pub train_labels: PathBuf,
    pub dev_embeddings: PathBuf,
    pub dev_labels: PathBuf,
    /// Store for the similarity track; defaults to `dev_embeddings`.
    #[serde(default)]
    pub sim_embeddings: Option<PathBuf>,
    pub grid: Vec<GridPoint>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Overrides the command-line seed for this model.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub allow_any_lr: bool,
}

fn default_epochs() -> usize {
    TrainConfig::DEFAULT_EPOCHS
}

fn default_weight_decay() -> f64 {
    TrainConfig::DEFAULT_WEIGHT_DECAY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub models: Vec<ManifestModel>,
}

impl RunManifest {
    /// Parses a manifest; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut manifest: RunManifest = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        if manifest.models.is_empty() {
            return Err(Error::Manifest("no models listed".into()));
        }
        for m in &mut manifest.models {
            if m.grid.is_empty() {
                return Err(Error::Manifest(format!("model {} has an empty grid", m.model_id)));
            }
            for p in [
                &mut m.train_embeddings,
                &mut m.train_labels,
                &mut m.dev_embeddings,
                &mut m.dev_labels,
            ]
            .into_iter()
            .chain(m.sim_embeddings.as_mut())
            {
                if p.is_relative() {
                    *p = base_dir.join(&*p);
                }
                if !p.exists() {
                    return Err(Error::Manifest(format!(
                        "model {}: {} does not exist",
                        m.model_id,
                        p.display()
                    )));
                }
            }
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub selected: bool,
}

/// Index of the best successful point: highest accuracy, then lower learning
/// rate, then smaller batch, then earliest in the grid.
pub fn select_best(outcomes: &[GridOutcome]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        let Some(acc) = o.accuracy else { continue };
        let better = match best {
            None => true,
            Some(j) => {
                let b = &outcomes[j];
                let b_acc = b.accuracy.expect("best has accuracy");
                acc > b_acc
                    || (acc == b_acc
                        && (o.learning_rate < b.learning_rate
                            || (o.learning_rate == b.learning_rate && o.batch_size < b.batch_size)))
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

fn model_slug(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs one model's grid. Returns its run row, or `None` if no point succeeded.
fn grid_model(model: &ManifestModel, seed: u64, out_dir: &Path, timing: bool) -> Result<Option<ModelRun>> {
    let (train, train_labels) = load_labeled(&model.train_embeddings, &model.train_labels)?;
    let (dev, dev_labels) = load_labeled(&model.dev_embeddings, &model.dev_labels)?;
    let (sim_store, sim_labels) = match &model.sim_embeddings {
        Some(p) => load_labeled(p, &model.dev_labels)?,
        None => (dev.clone(), dev_labels.clone()),
    };
    let sim = evaluate_sim(&sim_store, &sim_labels, false)?;

    let mut outcomes = Vec::with_capacity(model.grid.len());
    let mut heads = Vec::with_capacity(model.grid.len());
    for point in &model.grid {
        let cfg = TrainConfig {
            learning_rate: point.learning_rate,
            batch_size: point.batch_size,
            epochs: model.epochs,
            weight_decay: model.weight_decay,
            seed: model.seed.unwrap_or(seed),
        };
        let attempt = cfg
            .validate()
            .and_then(|()| {
                if model.allow_any_lr {
                    Ok(())
                } else {
                    cfg.check_lr_grid()
                }
            })
            .and_then(|()| train_and_evaluate((&train, &train_labels), (&dev, &dev_labels), &cfg, timing));
        let outcome = match attempt {
            Ok((head, result)) => {
                heads.push(Some(head));
                GridOutcome {
                    learning_rate: point.learning_rate,
                    batch_size: point.batch_size,
                    accuracy: Some(result.accuracy),
                    wall_seconds: Some(result.wall_seconds),
                    error: None,
                    selected: false,
                }
            }
            Err(e) => {
                heads.push(None);
                GridOutcome {
                    learning_rate: point.learning_rate,
                    batch_size: point.batch_size,
                    accuracy: None,
                    wall_seconds: None,
                    error: Some(e.to_string()),
                    selected: false,
                }
            }
        };
        outcomes.push(outcome);
    }

    let best = select_best(&outcomes);
    let model_dir = out_dir.join(model_slug(&model.model_id));
    fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
    if let Some(b) = best {
        outcomes[b].selected = true;
        heads[b]
            .as_ref()
            .expect("selected point trained")
            .write(model_dir.join("best_head.json"))?;
    }
    let mut listing = serde_json::to_string_pretty(&outcomes).expect("outcomes serialize");
    listing.push('\n');
    write_file(&model_dir.join("grid.json"), &listing)?;

    Ok(best.map(|b| ModelRun {
        model_id: model.model_id.clone(),
        sim_accuracy: 100.0 * sim.accuracy,
        clf_accuracy: 100.0 * outcomes[b].accuracy.expect("selected point succeeded"),
        sim_seconds: if timing { sim.wall_seconds } else { 0.0 },
        clf_seconds: outcomes[b].wall_seconds.expect("selected point succeeded"),
    }))
}

pub fn cmd_grid(args: &GridArgs, timing: bool) -> Result<()> {
    let manifest = RunManifest::load(&args.manifest)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for model in &manifest.models {
        match grid_model(model, args.seed, &args.out, timing)? {
            Some(run) => runs.push(run),
            None => failed.push(model.model_id.clone()),
        }
    }
    write_file(&args.out.join("runs.csv"), &runs_to_csv(&runs))?;
    match failed.first() {
        Some(id) => Err(Error::EmptyGrid(id.clone())),
        None => Ok(()),
    }
}

/// Writes the report JSON and returns the ranked table for display.
pub fn cmd_correlate(args: &CorrelateArgs) -> Result<String> {
    let runs = read_runs_csv(&args.runs)?;
    let report = correlate_runs(&runs)?;
    write_file(&args.out, &report.to_json())?;
    let mut text = ranked_table(&runs);
    text.push_str(&format!(
        "\nn = {}  pearson r = {:.4} (p = {:.4})  spearman rho = {:.4} (p = {:.4})",
        report.n, report.pearson_r, report.pearson_p, report.spearman_rho, report.spearman_p
    ));
    if let Some(s) = report.mean_speedup {
        text.push_str(&format!("  mean speedup = {s:.1}x"));
    }
    text.push('\n');
    Ok(text)
}
