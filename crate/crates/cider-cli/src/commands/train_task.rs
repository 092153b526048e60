//! `cider train-task`: train the graph classifier whose representation and
//! logits the explainer later measures against.

use super::{ensure_dir, load_config_file, require_path, resolve, write_json_file};
use cider_core::autodiff::AdamConfig;
use cider_core::checkpoint::save_task_checkpoint;
use cider_core::data::json::load_dataset;
use cider_core::gnn::{train_task_model, TaskTrainConfig};
use cider_core::Result;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct TrainTaskArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (manifest.json + graphs/).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory for checkpoint, metrics, and config echo.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden width of every GCN layer.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Number of GCN layers before mean pooling.
    #[arg(long)]
    pub gcn_layers: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Probability that each edge is dropped in a fine-tune forward.
    #[arg(long)]
    pub edge_dropout: Option<f64>,
    /// Length of the edge-dropout fine-tune phase after clean training.
    #[arg(long)]
    pub dropout_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FileConfig {
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    hidden: Option<usize>,
    gcn_layers: Option<usize>,
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    patience: Option<usize>,
    edge_dropout: Option<f64>,
    dropout_epochs: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    dataset: PathBuf,
    out: PathBuf,
    epochs: usize,
    batch_size: usize,
    hidden: usize,
    gcn_layers: usize,
    learning_rate: f64,
    weight_decay: f64,
    patience: usize,
    edge_dropout: f64,
    dropout_epochs: usize,
    seed: u64,
}

pub fn run(args: TrainTaskArgs) -> Result<()> {
    let file: FileConfig = load_config_file(args.config.as_deref())?;
    let defaults = TaskTrainConfig::default();
    let cfg = ResolvedConfig {
        dataset: require_path(args.dataset, file.dataset, "dataset")?,
        out: require_path(args.out, file.out, "out")?,
        epochs: resolve(args.epochs, file.epochs, defaults.epochs),
        batch_size: resolve(args.batch_size, file.batch_size, defaults.batch_size),
        hidden: resolve(args.hidden, file.hidden, defaults.hidden),
        gcn_layers: resolve(args.gcn_layers, file.gcn_layers, defaults.gcn_layers),
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
        patience: resolve(args.patience, file.patience, defaults.patience),
        edge_dropout: resolve(args.edge_dropout, file.edge_dropout, defaults.edge_dropout),
        dropout_epochs: resolve(args.dropout_epochs, file.dropout_epochs, defaults.dropout_epochs),
        seed: resolve(args.seed, file.seed, 0),
    };

    let ds = load_dataset(&cfg.dataset)?;
    let train_cfg = TaskTrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: AdamConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
        hidden: cfg.hidden,
        gcn_layers: cfg.gcn_layers,
        patience: cfg.patience,
        edge_dropout: cfg.edge_dropout,
        dropout_epochs: cfg.dropout_epochs,
    };
    let (model, metrics) = train_task_model(&ds, &train_cfg, cfg.seed)?;

    ensure_dir(&cfg.out)?;
    save_task_checkpoint(&model, &cfg.out.join("task-checkpoint.json"))?;
    write_json_file(&cfg.out.join("metrics.json"), &metrics)?;
    write_json_file(&cfg.out.join("config.json"), &cfg)?;
    println!(
        "trained {} epochs (stopped early: {}), validation accuracy {:.4}, test accuracy {:.4}",
        metrics.epochs_run, metrics.stopped_early, metrics.best_validation_accuracy,
        metrics.test_accuracy
    );
    Ok(())
}
