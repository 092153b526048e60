//! `cider explain`: train the two-channel explainer with counterfactual
//! distillation, then trace every test graph through the frozen chain.

use super::{ensure_dir, load_config_file, require_path, resolve, write_json_file};
use cider_core::autodiff::AdamConfig;
use cider_core::checkpoint::{load_task_checkpoint, save_cider_checkpoint};
use cider_core::data::json::load_dataset;
use cider_core::diffusion::{
    explain_graph, export_trace_json, train_cider, DiffusionConfig, Objective, UpdateMode,
};
use cider_core::gnn::TaskModel;
use cider_core::graph::Dataset;
use cider_core::model::CiderParams;
use cider_core::{CiderError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct ExplainArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (manifest.json + graphs/).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Trained task-model checkpoint to explain.
    #[arg(long)]
    pub task_checkpoint: Option<PathBuf>,
    /// Output directory for checkpoint, traces, loss curve, and config echo.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Distillation chain length T.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Causal decodes averaged per step.
    #[arg(long)]
    pub nc: Option<usize>,
    /// Spurious draws (counterfactuals) per step.
    #[arg(long)]
    pub ns: Option<usize>,
    /// Invariance target: "model" (representation gap) or "phenomenon" (label cross-entropy).
    #[arg(long)]
    pub objective: Option<String>,
    /// Weight of the task-consistency loss term.
    #[arg(long)]
    pub lambda_task: Option<f64>,
    /// Gradient schedule: "per-step" or "per-chain".
    #[arg(long)]
    pub update_mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden width of the shared encoder.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Width of each latent channel.
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FileConfig {
    dataset: Option<PathBuf>,
    task_checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
    steps: Option<usize>,
    nc: Option<usize>,
    ns: Option<usize>,
    objective: Option<String>,
    lambda_task: Option<f64>,
    update_mode: Option<String>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    hidden: Option<usize>,
    latent: Option<usize>,
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    dataset: PathBuf,
    task_checkpoint: PathBuf,
    out: PathBuf,
    steps: usize,
    nc: usize,
    ns: usize,
    objective: String,
    lambda_task: f64,
    update_mode: String,
    epochs: usize,
    batch_size: usize,
    hidden: usize,
    latent: usize,
    learning_rate: f64,
    weight_decay: f64,
    seed: u64,
}

pub(crate) fn parse_objective(s: &str) -> Result<Objective> {
    match s {
        "model" => Ok(Objective::Model),
        "phenomenon" => Ok(Objective::Phenomenon),
        other => Err(CiderError::contract(format!(
            "unknown objective '{other}', expected 'model' or 'phenomenon'"
        ))),
    }
}

pub(crate) fn parse_update_mode(s: &str) -> Result<UpdateMode> {
    match s {
        "per-step" => Ok(UpdateMode::PerStep),
        "per-chain" => Ok(UpdateMode::PerChain),
        other => Err(CiderError::contract(format!(
            "unknown update mode '{other}', expected 'per-step' or 'per-chain'"
        ))),
    }
}

pub(crate) fn check_task_matches(task: &TaskModel, ds: &Dataset) -> Result<()> {
    if task.feature_dim() != ds.feature_dim() || task.class_count != ds.class_count {
        return Err(CiderError::contract(format!(
            "checkpoint/architecture mismatch: task model expects {} features / {} classes, dataset has {} / {}",
            task.feature_dim(),
            task.class_count,
            ds.feature_dim(),
            ds.class_count
        )));
    }
    Ok(())
}

/// Graphs to trace: the test split, or every graph when no test split exists
/// (single-graph bio datasets live entirely in train).
pub(crate) fn trace_indices(ds: &Dataset) -> Vec<usize> {
    if ds.split.test.is_empty() {
        (0..ds.graphs.len()).collect()
    } else {
        ds.split.test.clone()
    }
}

pub fn run(args: ExplainArgs) -> Result<()> {
    let file: FileConfig = load_config_file(args.config.as_deref())?;
    let defaults = DiffusionConfig::default();
    let cfg = ResolvedConfig {
        dataset: require_path(args.dataset, file.dataset, "dataset")?,
        task_checkpoint: require_path(args.task_checkpoint, file.task_checkpoint, "task-checkpoint")?,
        out: require_path(args.out, file.out, "out")?,
        steps: resolve(args.steps, file.steps, defaults.steps),
        nc: resolve(args.nc, file.nc, defaults.n_causal),
        ns: resolve(args.ns, file.ns, defaults.n_spurious),
        objective: resolve(args.objective, file.objective, "model".into()),
        lambda_task: resolve(args.lambda_task, file.lambda_task, defaults.lambda_task),
        update_mode: resolve(args.update_mode, file.update_mode, "per-step".into()),
        epochs: resolve(args.epochs, file.epochs, defaults.epochs),
        batch_size: resolve(args.batch_size, file.batch_size, defaults.batch_size),
        hidden: resolve(args.hidden, file.hidden, 20),
        latent: resolve(args.latent, file.latent, 20),
        learning_rate: resolve(
            args.learning_rate,
            file.learning_rate,
            defaults.adam.learning_rate,
        ),
        weight_decay: resolve(
            args.weight_decay,
            file.weight_decay,
            defaults.adam.weight_decay,
        ),
        seed: resolve(args.seed, file.seed, 0),
    };

    let ds = load_dataset(&cfg.dataset)?;
    let task = load_task_checkpoint(&cfg.task_checkpoint)?;
    check_task_matches(&task, &ds)?;

    let dcfg = DiffusionConfig {
        steps: cfg.steps,
        n_causal: cfg.nc,
        n_spurious: cfg.ns,
        objective: parse_objective(&cfg.objective)?,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: AdamConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
        lambda_task: cfg.lambda_task,
        update_mode: parse_update_mode(&cfg.update_mode)?,
        seed: cfg.seed,
    };

    let mut params = CiderParams::init(ds.feature_dim(), cfg.hidden, cfg.latent, cfg.seed)?;
    let log = train_cider(&mut params, &task, &ds, &dcfg)?;

    ensure_dir(&cfg.out)?;
    save_cider_checkpoint(&params, &cfg.out.join("cider-checkpoint.json"))?;

    let curve_path = cfg.out.join("loss-curve.csv");
    let mut wtr = csv::Writer::from_path(&curve_path).map_err(|e| {
        CiderError::contract(format!("cannot write {}: {e}", curve_path.display()))
    })?;
    wtr.write_record(["epoch", "l1", "kld", "recon", "task", "total"])
        .and_then(|()| {
            log.epoch_losses.iter().enumerate().try_for_each(|(i, l)| {
                wtr.write_record([
                    (i + 1).to_string(),
                    l.l1.to_string(),
                    l.kld.to_string(),
                    l.recon.to_string(),
                    l.task.to_string(),
                    l.total.to_string(),
                ])
            })
        })
        .map_err(|e| CiderError::contract(format!("loss curve write failed: {e}")))?;
    wtr.flush().map_err(|e| CiderError::io(&curve_path, e))?;

    let traces_dir = cfg.out.join("traces");
    ensure_dir(&traces_dir)?;
    let indices = trace_indices(&ds);
    for &i in &indices {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ i as u64);
        let (result, trace) = explain_graph(&params, &task, &ds.graphs[i], &dcfg, &mut rng)?;
        let value = export_trace_json(&trace, &result);
        write_json_file(&traces_dir.join(format!("graph_{i:05}.json")), &value)?;
    }

    write_json_file(&cfg.out.join("config.json"), &cfg)?;
    let final_loss = log.epoch_losses.last().map_or(f64::NAN, |l| l.total);
    println!(
        "trained {} epochs (final total loss {:.4}), wrote {} traces to {}",
        log.epoch_losses.len(),
        final_loss,
        indices.len(),
        cfg.out.display()
    );
    Ok(())
}
