//! Repeated seeded runs and everything they write to disk.

use std::fs;
use std::path::Path;

use dcrn::cluster_metrics::{self, MetricsReport};
use dcrn::data_io;
use dcrn::graph::Graph;
use dcrn::model::checkpoint;
use dcrn::optim::{self, EpochRecord, RunOutput, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;

/// One seeded run as recorded in `metrics.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub metrics: Option<MetricsReport>,
    pub iterations: usize,
    pub inertia: f64,
}

/// Contents of `metrics.json`, shared by every training command.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsFile {
    pub dataset: String,
    pub ablation: String,
    pub n_clusters: usize,
    pub readout_k: usize,
    pub base_seed: u64,
    pub runs: Vec<RunRecord>,
    pub mean: Option<MetricsReport>,
    pub std: Option<MetricsReport>,
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Trains `runs` seeds `cfg.seed + i`, in parallel unless `serial`.
///
/// Results are returned in run order regardless of scheduling.
pub fn execute(g: &Graph, cfg: &TrainConfig, runs: usize, serial: bool) -> Result<Vec<RunOutput>, CliError> {
    let one = |i: usize| {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(i as u64);
        optim::run(g, &c).map_err(CliError::from)
    };
    if serial {
        (0..runs).map(one).collect()
    } else {
        (0..runs).into_par_iter().map(one).collect()
    }
}

fn write_log(path: &Path, log: &[EpochRecord]) -> Result<(), CliError> {
    let mut text = String::from(EpochRecord::TSV_HEADER);
    text.push('\n');
    for r in log {
        text.push_str(&r.to_tsv());
        text.push('\n');
    }
    write_text(path, &text)
}

/// Writes per-run artifacts plus `metrics.json` under `dir` and returns the summary.
pub fn write_runs(
    dir: &Path,
    dataset: &str,
    cfg: &TrainConfig,
    outputs: &[RunOutput],
) -> Result<MetricsFile, CliError> {
    create_dir(dir)?;
    let mut records = Vec::with_capacity(outputs.len());
    for (i, out) in outputs.iter().enumerate() {
        let run_dir = dir.join(format!("run-{i:03}"));
        create_dir(&run_dir)?;
        write_log(&run_dir.join("epochs.tsv"), &out.log)?;
        checkpoint::save(&run_dir.join("checkpoint.bin"), &out.params.named())?;
        data_io::dump_embedding(&out.embedding, &run_dir.join("embedding.tsv"))?;
        let assignments: String = out
            .clustering
            .assignments
            .iter()
            .map(|a| format!("{a}\n"))
            .collect();
        write_text(&run_dir.join("assignments.tsv"), &assignments)?;
        records.push(RunRecord {
            run: i,
            seed: cfg.seed.wrapping_add(i as u64),
            metrics: out.metrics,
            iterations: out.clustering.iterations,
            inertia: out.clustering.inertia,
        });
    }
    let reports: Option<Vec<MetricsReport>> = records.iter().map(|r| r.metrics).collect();
    let agg = match reports {
        Some(r) => Some(cluster_metrics::aggregate(&r)?),
        None => None,
    };
    let file = MetricsFile {
        dataset: dataset.to_string(),
        ablation: cfg.ablation.to_string(),
        n_clusters: cfg.model.n_clusters,
        readout_k: cfg.model.readout_k,
        base_seed: cfg.seed,
        runs: records,
        mean: agg.map(|a| a.mean),
        std: agg.map(|a| a.std),
    };
    write_text(&dir.join("metrics.json"), &dcrn::to_sorted_json(&file))?;
    Ok(file)
}

/// Runs and writes one configuration into `dir`.
pub fn train_into(
    dir: &Path,
    dataset: &str,
    g: &Graph,
    cfg: &TrainConfig,
    runs: usize,
    serial: bool,
) -> Result<MetricsFile, CliError> {
    let outputs = execute(g, cfg, runs, serial)?;
    write_runs(dir, dataset, cfg, &outputs)
}
