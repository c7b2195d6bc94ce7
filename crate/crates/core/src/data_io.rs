//! Dataset directories, the stochastic-block-model generator and embedding dumps.
//!
//! A dataset directory holds three plain-text files and a manifest:
//!
//! * `features.tsv`: one node per line, `D` tab-separated floats
//! * `edges.tsv`: one `u<TAB>v` pair per line, 0-indexed
//! * `labels.tsv`: one integer class id per line
//! * `manifest.json`: name, counts and the three file paths

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub feature_dim: usize,
    pub n_classes: usize,
    /// Paths are resolved relative to the manifest's directory.
    pub features: PathBuf,
    pub edges: PathBuf,
    pub labels: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

/// Bookkeeping from [`load_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadStats {
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads a tab- or space-separated float matrix, one row per line.
pub fn read_matrix_tsv(path: &Path) -> Result<Matrix> {
    let text = read_text(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, l) in content_lines(&text) {
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: e.to_string(),
            })?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("expected {c} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("column {bad} is not finite"),
            });
        }
        values.extend(row);
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), values)
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize, usize)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (line, l) in content_lines(&text) {
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let ids: Vec<&str> = l.split_whitespace().collect();
        if ids.len() != 2 {
            return Err(parse_err(format!("expected 2 node ids, found {}", ids.len())));
        }
        let u = ids[0].parse::<usize>().map_err(|e| parse_err(e.to_string()))?;
        let v = ids[1].parse::<usize>().map_err(|e| parse_err(e.to_string()))?;
        out.push((line, u, v));
    }
    Ok(out)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(line, l)| {
            l.parse::<usize>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Loads the graph described by `manifest`, with paths relative to `base`.
///
/// Edges are stored once per unordered pair; self-loops and repeated pairs
/// are dropped and counted in the returned [`LoadStats`].
pub fn load_graph(manifest: &DatasetManifest, base: &Path) -> Result<(Graph, LoadStats)> {
    let x = read_matrix_tsv(&base.join(&manifest.features))?;
    if x.rows() != manifest.n_nodes || x.cols() != manifest.feature_dim {
        return Err(Error::Manifest(format!(
            "features are {}x{}, manifest says {}x{}",
            x.rows(),
            x.cols(),
            manifest.n_nodes,
            manifest.feature_dim
        )));
    }
    let edges_path = base.join(&manifest.edges);
    let mut stats = LoadStats::default();
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for (line, u, v) in read_edges(&edges_path)? {
        if u >= manifest.n_nodes || v >= manifest.n_nodes {
            return Err(Error::Parse {
                path: edges_path.clone(),
                line,
                msg: format!("node id out of range [0, {})", manifest.n_nodes),
            });
        }
        if u == v {
            stats.self_loops_dropped += 1;
            continue;
        }
        if !seen.insert((u.min(v), u.max(v))) {
            stats.duplicates_dropped += 1;
            continue;
        }
        edges.push((u, v));
    }
    if edges.len() != manifest.n_edges {
        return Err(Error::Manifest(format!(
            "{} distinct edges, manifest says {}",
            edges.len(),
            manifest.n_edges
        )));
    }
    let labels = match &manifest.labels {
        Some(p) => {
            let labels = read_labels(&base.join(p))?;
            if labels.len() != manifest.n_nodes {
                return Err(Error::Manifest(format!(
                    "{} labels, manifest says {} nodes",
                    labels.len(),
                    manifest.n_nodes
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= manifest.n_classes) {
                return Err(Error::Manifest(format!(
                    "label {bad} outside [0, {})",
                    manifest.n_classes
                )));
            }
            Some(labels)
        }
        None => None,
    };
    let g = Graph::new(manifest.n_nodes, edges, x, labels)?;
    Ok((g, stats))
}

/// Loads `dir/manifest.json` and the files it names.
pub fn load_dataset_dir(dir: &Path) -> Result<(Graph, DatasetManifest, LoadStats)> {
    let manifest = DatasetManifest::read(&dir.join(MANIFEST_FILE))?;
    let (g, stats) = load_graph(&manifest, dir)?;
    Ok((g, manifest, stats))
}

/// Full-precision text form of one value (17 significant digits).
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a matrix as tab-separated text, one row per line.
pub fn dump_embedding(z: &Matrix, path: &Path) -> Result<()> {
    write_lines(
        path,
        (0..z.rows()).map(|i| {
            z.row_slice(i)
                .iter()
                .map(|&v| format_f64(v))
                .collect::<Vec<_>>()
                .join("\t")
        }),
    )
}

/// Writes `g` as a dataset directory and returns its manifest.
pub fn write_dataset(g: &Graph, name: &str, dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    dump_embedding(g.attributes(), &dir.join("features.tsv"))?;
    write_lines(
        &dir.join("edges.tsv"),
        g.edges().iter().map(|(u, v)| format!("{u}\t{v}")),
    )?;
    let labels = match g.labels() {
        Some(l) => {
            write_lines(&dir.join("labels.tsv"), l.iter().map(|v| v.to_string()))?;
            Some(PathBuf::from("labels.tsv"))
        }
        None => None,
    };
    let manifest = DatasetManifest {
        name: name.to_string(),
        n_nodes: g.n_nodes(),
        n_edges: g.n_edges(),
        feature_dim: g.feature_dim(),
        n_classes: g.n_classes().unwrap_or(0),
        features: PathBuf::from("features.tsv"),
        edges: PathBuf::from("edges.tsv"),
        labels,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = crate::to_sorted_json(&manifest);
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Stochastic block model with Gaussian attributes around per-block centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmSpec {
    pub n_clusters: usize,
    pub nodes_per_cluster: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub center_separation: f64,
    pub feature_noise_std: f64,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            n_clusters: 3,
            nodes_per_cluster: 50,
            p_in: 0.3,
            p_out: 0.02,
            feature_dim: 16,
            center_separation: 2.0,
            feature_noise_std: 0.5,
            seed: 0,
        }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.nodes_per_cluster == 0 || self.feature_dim == 0 {
            return Err(Error::Contract(
                "n_clusters, nodes_per_cluster and feature_dim must be positive".into(),
            ));
        }
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return Err(Error::Contract(format!(
                "need 0 <= p_out < p_in <= 1, got p_out {} and p_in {}",
                self.p_out, self.p_in
            )));
        }
        if !(self.feature_noise_std >= 0.0) || !self.center_separation.is_finite() {
            return Err(Error::Contract("invalid feature parameters".into()));
        }
        Ok(())
    }

    /// Block center: `center_separation` along axis `k mod D`, sign flipped
    /// on every other wrap when there are more blocks than axes.
    pub fn center(&self, k: usize) -> Vec<f64> {
        let d = self.feature_dim;
        let mut c = vec![0.0; d];
        let sign = if (k / d) % 2 == 0 { 1.0 } else { -1.0 };
        c[k % d] = sign * self.center_separation;
        c
    }
}

/// Samples a graph from `spec`. Nodes are ordered block by block.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Graph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_clusters * spec.nodes_per_cluster;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.nodes_per_cluster).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let noise = Normal::new(0.0, spec.feature_noise_std)
        .map_err(|e| Error::Contract(e.to_string()))?;
    let centers: Vec<Vec<f64>> = (0..spec.n_clusters).map(|k| spec.center(k)).collect();
    let mut x = Matrix::zeros(n, spec.feature_dim);
    for i in 0..n {
        for j in 0..spec.feature_dim {
            let eps = if spec.feature_noise_std > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            x[(i, j)] = centers[labels[i]][j] + eps;
        }
    }
    Graph::new(n, edges, x, Some(labels))
}
