//! K-means over embeddings and clustering quality against ground truth.
//!
//! Accuracy and macro-F1 are computed after relabeling clusters with the
//! Kuhn–Munkres bijection that maximizes the number of matched nodes. NMI
//! and ARI are invariant to relabeling and need no mapping.

mod hungarian;
mod kmeans;

pub use hungarian::{contingency, hungarian_map, min_cost_assignment};
pub use kmeans::{kmeans, kmeans_restarts, kmeans_with, ClusterResult, KMeansParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clustering quality of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
}

/// Normalizer for mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmiNormalization {
    #[default]
    Arithmetic,
    Geometric,
}

/// Per-metric mean and population standard deviation over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: MetricsReport,
    pub std: MetricsReport,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Normalized mutual information between two labelings.
pub fn nmi(pred: &[usize], truth: &[usize], norm: NmiNormalization) -> Result<f64> {
    let c = label_space(pred, truth)?;
    let table = contingency(pred, truth, c)?;
    let n = pred.len() as f64;
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..c).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h_pred = entropy(rows.iter().copied(), n);
    let h_truth = entropy(cols.iter().copied(), n);
    if h_pred == 0.0 && h_truth == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (k, row) in table.iter().enumerate() {
        for (j, &nkj) in row.iter().enumerate() {
            if nkj > 0 {
                let nkj = nkj as f64;
                mi += nkj / n * (n * nkj / (rows[k] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    let denom = match norm {
        NmiNormalization::Arithmetic => 0.5 * (h_pred + h_truth),
        NmiNormalization::Geometric => (h_pred * h_truth).sqrt(),
    };
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Adjusted Rand index from the pair-counting contingency formula.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = label_space(pred, truth)?;
    let table = contingency(pred, truth, c)?;
    let index: f64 = table.iter().flatten().map(|&v| choose2(v)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..c)
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let expected = rows * cols / choose2(pred.len());
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn label_space(pred: &[usize], truth: &[usize]) -> Result<usize> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Contract("cannot score an empty labeling".into()));
    }
    Ok(pred.iter().chain(truth).copied().max().unwrap_or(0) + 1)
}

/// ACC, NMI (arithmetic normalization), ARI and macro-F1.
pub fn metrics(pred: &[usize], truth: &[usize]) -> Result<MetricsReport> {
    metrics_with(pred, truth, NmiNormalization::Arithmetic)
}

pub fn metrics_with(pred: &[usize], truth: &[usize], norm: NmiNormalization) -> Result<MetricsReport> {
    let c = label_space(pred, truth)?;
    let (mapping, matched) = hungarian_map(pred, truth, c)?;
    let n = pred.len();
    let mapped: Vec<usize> = pred.iter().map(|&p| mapping[p]).collect();

    let mut tp = vec![0usize; c];
    let mut pred_count = vec![0usize; c];
    let mut true_count = vec![0usize; c];
    for (&p, &t) in mapped.iter().zip(truth) {
        pred_count[p] += 1;
        true_count[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    // Macro average over labels present in either labeling.
    let present: Vec<usize> = (0..c)
        .filter(|&k| pred_count[k] + true_count[k] > 0)
        .collect();
    let f1 = present
        .iter()
        .map(|&k| {
            if tp[k] == 0 {
                0.0
            } else {
                2.0 * tp[k] as f64 / (pred_count[k] + true_count[k]) as f64
            }
        })
        .sum::<f64>()
        / present.len() as f64;

    Ok(MetricsReport {
        acc: matched as f64 / n as f64,
        nmi: nmi(pred, truth, norm)?,
        ari: ari(pred, truth)?,
        f1,
    })
}

/// Mean and population standard deviation of each metric.
pub fn aggregate(reports: &[MetricsReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::Contract("cannot aggregate zero reports".into()));
    }
    let n = reports.len() as f64;
    // Shifted by the first value so identical samples give exactly zero spread.
    let stat = |f: fn(&MetricsReport) -> f64| {
        let shift = f(&reports[0]);
        let d_mean = reports.iter().map(|r| f(r) - shift).sum::<f64>() / n;
        let var = reports
            .iter()
            .map(|r| (f(r) - shift - d_mean).powi(2))
            .sum::<f64>()
            / n;
        (shift + d_mean, var.sqrt())
    };
    let (acc, nmi, ari, f1) = (
        stat(|r| r.acc),
        stat(|r| r.nmi),
        stat(|r| r.ari),
        stat(|r| r.f1),
    );
    Ok(Aggregate {
        mean: MetricsReport {
            acc: acc.0,
            nmi: nmi.0,
            ari: ari.0,
            f1: f1.0,
        },
        std: MetricsReport {
            acc: acc.1,
            nmi: nmi.1,
            ari: ari.1,
            f1: f1.1,
        },
    })
}
