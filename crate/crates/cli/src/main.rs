//! `dcrn`: train, ablate and verify the dual correlation reduction clusterer.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 divergence, 4 I/O error.

mod config;
mod error;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dcrn::cluster_metrics::MetricsReport;
use dcrn::data_io::{self, SbmSpec};
use dcrn::gradcheck;
use dcrn::linalg::{inject_fault, Fault};
use dcrn::optim::{Ablation, Preset};
use serde::Serialize;

use config::{Overrides, Plan};
use error::CliError;
use runner::MetricsFile;

#[derive(Debug, Parser)]
#[command(name = "dcrn", version, about = "Deep graph clustering by dual correlation reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pretrain, train and cluster for each seeded run.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Which optional loss terms to enable.
        #[arg(long)]
        ablation: Option<Ablation>,
    },
    /// Train every ablation variant under the same seeds.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Retrain with the readout width set to each value of `--k`.
    SweepK {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        ablation: Option<Ablation>,
        /// Comma-separated readout widths; defaults to C-1, C, C+1 and 2C.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Compare analytic gradients of every loss with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random graphs.
        #[arg(long, default_value_t = 20)]
        graphs: usize,
        /// Also write the report as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a stochastic block model as a dataset directory.
    GenSynth {
        /// SbmSpec JSON file.
        spec: PathBuf,
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    /// Learning rate (and teleport probability) of a published dataset.
    #[arg(long)]
    preset: Option<Preset>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Run seeds one after another for bit-exact replays.
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn plan(&self, ablation: Option<Ablation>) -> Result<Plan, CliError> {
        let o = Overrides {
            preset: self.preset,
            seed: self.seed,
            runs: self.runs,
            out: self.out.clone(),
            ablation,
        };
        config::load_plan(&self.config, &o)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    out_dir: &'a Path,
    elapsed_secs: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    results: Vec<SummaryRow>,
}

#[derive(Serialize)]
struct SummaryRow {
    ablation: String,
    readout_k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    default: Option<bool>,
    mean: Option<MetricsReport>,
    std: Option<MetricsReport>,
}

impl SummaryRow {
    fn from_file(m: &MetricsFile, default: Option<bool>) -> Self {
        Self {
            ablation: m.ablation.clone(),
            readout_k: m.readout_k,
            default,
            mean: m.mean,
            std: m.std,
        }
    }
}

fn print_summary(command: &str, out_dir: &Path, start: Instant, results: Vec<SummaryRow>) {
    let s = Summary {
        command,
        out_dir,
        elapsed_secs: start.elapsed().as_secs_f64(),
        results,
    };
    println!("{}", dcrn::to_sorted_json(&s));
}

fn cmd_train(common: &CommonArgs, ablation: Option<Ablation>) -> Result<(), CliError> {
    let start = Instant::now();
    let plan = common.plan(ablation)?;
    let m = runner::train_into(
        &plan.out_dir,
        &plan.dataset,
        &plan.graph,
        &plan.train,
        plan.runs,
        common.serial,
    )?;
    print_summary("train", &plan.out_dir, start, vec![SummaryRow::from_file(&m, None)]);
    Ok(())
}

fn stat_cells(m: &MetricsFile) -> Vec<String> {
    let (mean, std) = (m.mean.unwrap_or_default(), m.std.unwrap_or_default());
    [
        (mean.acc, std.acc),
        (mean.nmi, std.nmi),
        (mean.ari, std.ari),
        (mean.f1, std.f1),
    ]
    .iter()
    .flat_map(|(a, b)| [format!("{a:.6}"), format!("{b:.6}")])
    .collect()
}

const STAT_HEADER: &str = "acc_mean\tacc_std\tnmi_mean\tnmi_std\tari_mean\tari_std\tf1_mean\tf1_std";

fn cmd_ablate(common: &CommonArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let plan = common.plan(None)?;
    plan.require_labels()?;
    let mut files = Vec::new();
    for variant in Ablation::ALL {
        let mut cfg = plan.train.clone();
        cfg.ablation = variant;
        let outputs = runner::execute(&plan.graph, &cfg, plan.runs, common.serial)?;
        files.push((cfg, outputs));
    }
    let mut rows = Vec::new();
    let mut tsv = format!("variant\t{STAT_HEADER}\n");
    for (cfg, outputs) in &files {
        let name = cfg.ablation.name();
        let m = runner::write_runs(&plan.out_dir.join(name), &plan.dataset, cfg, outputs)?;
        tsv.push_str(&format!("{name}\t{}\n", stat_cells(&m).join("\t")));
        rows.push(SummaryRow::from_file(&m, None));
    }
    runner::write_text(&plan.out_dir.join("ablation.tsv"), &tsv)?;
    runner::write_text(&plan.out_dir.join("ablation.json"), &dcrn::to_sorted_json(&rows))?;
    print_summary("ablate", &plan.out_dir, start, rows);
    Ok(())
}

fn sweep_values(requested: &[usize], c: usize, n: usize) -> Result<Vec<usize>, CliError> {
    let mut ks = if requested.is_empty() {
        let mut d = vec![c.saturating_sub(1), c, c + 1, 2 * c];
        d.retain(|&k| k > 0);
        d
    } else {
        requested.to_vec()
    };
    ks.dedup();
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > n) {
        return Err(CliError::Config(format!("readout width {bad} must lie in [1, {n}]")));
    }
    Ok(ks)
}

fn cmd_sweep_k(common: &CommonArgs, ablation: Option<Ablation>, k: &[usize]) -> Result<(), CliError> {
    let start = Instant::now();
    let plan = common.plan(ablation)?;
    plan.require_labels()?;
    let c = plan.train.model.n_clusters;
    let ks = sweep_values(k, c, plan.graph.n_nodes())?;
    let mut runs = Vec::new();
    for &k in &ks {
        let mut cfg = plan.train.clone();
        cfg.model.readout_k = k;
        let outputs = runner::execute(&plan.graph, &cfg, plan.runs, common.serial)?;
        runs.push((cfg, outputs));
    }
    let mut rows = Vec::new();
    let mut tsv = format!("k\tdefault\t{STAT_HEADER}\n");
    for (cfg, outputs) in &runs {
        let k = cfg.model.readout_k;
        let m = runner::write_runs(&plan.out_dir.join(format!("k-{k}")), &plan.dataset, cfg, outputs)?;
        let default = k == c;
        let marker = if default { "*" } else { "" };
        tsv.push_str(&format!("{k}\t{marker}\t{}\n", stat_cells(&m).join("\t")));
        rows.push(SummaryRow::from_file(&m, Some(default)));
    }
    runner::write_text(&plan.out_dir.join("sweep_k.tsv"), &tsv)?;
    runner::write_text(&plan.out_dir.join("sweep_k.json"), &dcrn::to_sorted_json(&rows))?;
    print_summary("sweep-k", &plan.out_dir, start, rows);
    Ok(())
}

// Test hook: corrupts one backward rule so the harness can be shown to fail.
fn fault_from_env() -> Result<(), CliError> {
    let Ok(v) = std::env::var("DCRN_INJECT_FAULT") else {
        return Ok(());
    };
    let fault = match v.as_str() {
        "" | "none" => Fault::None,
        "cosine" => Fault::Cosine,
        "row_softmax" => Fault::RowSoftmax,
        "matmul" => Fault::MatMul,
        other => return Err(CliError::Config(format!("unknown DCRN_INJECT_FAULT value {other:?}"))),
    };
    inject_fault(fault);
    Ok(())
}

fn cmd_gradcheck(seed: u64, graphs: usize, out: Option<&Path>) -> Result<(), CliError> {
    if graphs == 0 {
        return Err(CliError::Config("--graphs must be positive".into()));
    }
    fault_from_env()?;
    let report = gradcheck::run_suite(seed, graphs).map_err(|e| CliError::Verification(e.to_string()))?;
    for c in &report.checks {
        let status = if c.passed { "ok" } else { "FAIL" };
        println!("{:<6} max_rel_error={:.3e} {status}", c.loss, c.max_rel_error);
    }
    if let Some(path) = out {
        runner::write_text(path, &dcrn::to_sorted_json(&report))?;
    }
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.loss).collect();
        Err(CliError::Verification(format!(
            "gradient mismatch above {:e} in {}",
            gradcheck::TOLERANCE,
            names.join(", ")
        )))
    }
}

fn cmd_gen_synth(spec_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::Config(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let spec: SbmSpec = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Config(format!("{}: {}: {}", spec_path.display(), e.path(), e.inner())))?;
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let g = data_io::generate_sbm(&spec)?;
    data_io::write_dataset(&g, "sbm", out_dir).map_err(|e| CliError::Io(e.to_string()))?;
    println!(
        "{}",
        dcrn::to_sorted_json(&serde_json::json!({
            "command": "gen-synth",
            "out_dir": out_dir,
            "n_nodes": g.n_nodes(),
            "n_edges": g.n_edges(),
        }))
    );
    Ok(())
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("DCRN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("DCRN_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    init_threads()?;
    match &cli.command {
        Command::Train { common, ablation } => cmd_train(common, *ablation),
        Command::Ablate { common } => cmd_ablate(common),
        Command::SweepK { common, ablation, k } => cmd_sweep_k(common, *ablation, k),
        Command::Gradcheck { seed, graphs, out } => cmd_gradcheck(*seed, *graphs, out.as_deref()),
        Command::GenSynth { spec, out_dir } => cmd_gen_synth(spec, out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep_brackets_cluster_count() {
        assert_eq!(sweep_values(&[], 3, 100).unwrap(), vec![2, 3, 4, 6]);
        assert_eq!(sweep_values(&[], 1, 100).unwrap(), vec![1, 2]);
        assert_eq!(sweep_values(&[5], 3, 100).unwrap(), vec![5]);
        assert_eq!(sweep_values(&[0], 3, 100).unwrap_err().exit_code(), 2);
        assert_eq!(sweep_values(&[101], 3, 100).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "dcrn", "train", "--config", "c.json", "--preset", "dblp", "--seed", "7", "--runs", "2",
            "--serial", "--out", "o", "--ablation", "P-D",
        ])
        .unwrap();
        let Command::Train { common, ablation } = cli.command else {
            panic!("expected train");
        };
        assert_eq!(common.preset, Some(Preset::Dblp));
        assert_eq!(common.seed, Some(7));
        assert!(common.serial);
        assert_eq!(ablation, Some(Ablation::PD));
    }
}
