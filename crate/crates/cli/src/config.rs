//! JSON run configuration and its resolution against command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use dcrn::data_io::{self, SbmSpec, MANIFEST_FILE};
use dcrn::graph::{DistortionConfig, Graph};
use dcrn::losses::LossWeights;
use dcrn::model::ModelConfig;
use dcrn::optim::{Ablation, Preset, TrainConfig};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_RUNS: usize = 10;
pub const DEFAULT_OUT_DIR: &str = "dcrn-out";

/// Top-level document passed with `--config`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub runs: Option<usize>,
}

/// Either a generated block model or a dataset directory on disk.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Sbm(SbmSpec),
    /// Dataset directory, or the `manifest.json` inside one. Relative paths
    /// are resolved against the config file's directory.
    Manifest(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub preset: Option<Preset>,
    /// Overrides the preset's learning rate.
    pub lr: Option<f64>,
    pub pretrain_epochs: usize,
    pub init_epochs: usize,
    pub train_epochs: usize,
    pub weights: LossWeights,
    pub distortion: DistortionConfig,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Defaults to the number of ground-truth classes.
    pub n_clusters: Option<usize>,
    /// Defaults to `n_clusters`.
    pub readout_k: Option<usize>,
    pub seed: u64,
    pub ablation: Ablation,
    pub freeze_noise: bool,
    pub normalize_embedding: bool,
    pub kmeans_restarts: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::new(ModelConfig::new(1, 1));
        Self {
            preset: None,
            lr: None,
            pretrain_epochs: base.pretrain_epochs,
            init_epochs: base.init_epochs,
            train_epochs: base.train_epochs,
            weights: base.weights,
            distortion: base.distortion,
            hidden_dim: ModelConfig::DEFAULT_HIDDEN,
            latent_dim: ModelConfig::DEFAULT_LATENT,
            n_clusters: None,
            readout_k: None,
            seed: base.seed,
            ablation: base.ablation,
            freeze_noise: base.freeze_noise,
            normalize_embedding: base.normalize_embedding,
            kmeans_restarts: base.kmeans_restarts,
        }
    }
}

/// Values given on the command line; each replaces its config counterpart.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub out: Option<PathBuf>,
    pub ablation: Option<Ablation>,
}

/// A fully validated job: everything needed before touching the output directory.
#[derive(Debug, Clone)]
pub struct Plan {
    pub dataset: String,
    pub graph: Graph,
    pub train: TrainConfig,
    pub runs: usize,
    pub out_dir: PathBuf,
}

impl Plan {
    pub fn require_labels(&self) -> Result<(), CliError> {
        if self.graph.labels().is_none() {
            return Err(CliError::Config(format!(
                "dataset {:?} has no labels; this command reports metrics",
                self.dataset
            )));
        }
        Ok(())
    }
}

/// Parses a config document, reporting the JSON path of the first bad field.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })
}

pub fn read(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn load_dataset(source: &DatasetSource, base: &Path) -> Result<(String, Graph), CliError> {
    match source {
        DatasetSource::Sbm(spec) => {
            spec.validate().map_err(config_err)?;
            Ok(("sbm".to_string(), data_io::generate_sbm(spec)?))
        }
        DatasetSource::Manifest(path) => {
            let path = base.join(path);
            let dir = if path.file_name().is_some_and(|f| f == MANIFEST_FILE) {
                path.parent().map(Path::to_path_buf).unwrap_or_default()
            } else {
                path
            };
            let (g, manifest, stats) = data_io::load_dataset_dir(&dir)?;
            if stats.self_loops_dropped + stats.duplicates_dropped > 0 {
                eprintln!(
                    "warning: dropped {} self-loops and {} duplicate edges from {}",
                    stats.self_loops_dropped,
                    stats.duplicates_dropped,
                    dir.display()
                );
            }
            Ok((manifest.name, g))
        }
    }
}

fn config_err(e: dcrn::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Loads the dataset and builds the validated training configuration.
pub fn resolve(cfg: &RunConfig, config_dir: &Path, o: &Overrides) -> Result<Plan, CliError> {
    let (dataset, graph) = load_dataset(&cfg.dataset, config_dir)?;
    let t = &cfg.train;

    let n_clusters = match (t.n_clusters, graph.n_classes()) {
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => {
            return Err(CliError::Config(
                "train.n_clusters is required for unlabeled datasets".into(),
            ))
        }
    };
    if n_clusters > graph.n_nodes() {
        return Err(CliError::Config(format!(
            "n_clusters {n_clusters} exceeds the {} nodes of the dataset",
            graph.n_nodes()
        )));
    }
    let model = ModelConfig {
        input_dim: graph.feature_dim(),
        hidden_dim: t.hidden_dim,
        latent_dim: t.latent_dim,
        n_clusters,
        readout_k: t.readout_k.unwrap_or(n_clusters),
    };
    let mut train = TrainConfig::new(model);
    train.pretrain_epochs = t.pretrain_epochs;
    train.init_epochs = t.init_epochs;
    train.train_epochs = t.train_epochs;
    train.weights = t.weights;
    train.distortion = t.distortion.clone();
    train.seed = t.seed;
    train.ablation = t.ablation;
    train.freeze_noise = t.freeze_noise;
    train.normalize_embedding = t.normalize_embedding;
    train.kmeans_restarts = t.kmeans_restarts;
    if let Some(p) = t.preset {
        p.apply(&mut train);
    }
    if let Some(lr) = t.lr {
        train.lr = lr;
    }
    if let Some(p) = o.preset {
        p.apply(&mut train);
    }
    if let Some(seed) = o.seed {
        train.seed = seed;
    }
    if let Some(a) = o.ablation {
        train.ablation = a;
    }
    if train.kmeans_restarts == 0 {
        return Err(CliError::Config("kmeans_restarts must be positive".into()));
    }
    train.validate().map_err(config_err)?;

    let runs = o.runs.or(cfg.runs).unwrap_or(DEFAULT_RUNS);
    if runs == 0 {
        return Err(CliError::Config("runs must be positive".into()));
    }
    let out_dir = o
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(|p| config_dir.join(p)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    Ok(Plan {
        dataset,
        graph,
        train,
        runs,
        out_dir,
    })
}

/// Reads and resolves `path`, the common entry of every training command.
pub fn load_plan(path: &Path, o: &Overrides) -> Result<Plan, CliError> {
    let cfg = read(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    resolve(&cfg, dir, o)
}
