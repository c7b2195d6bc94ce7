//! Graph data model, adjacency normalizations and the two-view distortion.
//!
//! Both views share one corrupted attribute matrix `X̃ = X ⊙ N`. The first
//! view pairs it with an edge-masked adjacency, where the edges whose
//! endpoints are least similar in latent space are dropped; the second pairs
//! it with the personalized-PageRank diffusion of the original adjacency.
//!
//! Degrees in the symmetric normalization are taken over `A + I`, so every
//! normalized adjacency has spectral radius at most one and the diffusion
//! matrix is entry-wise nonnegative.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Undirected attributed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    attributes: Matrix,
    labels: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicate pairs and out-of-range ids.
    ///
    /// Each edge is stored once as `(min, max)` in the order given.
    pub fn new(
        n_nodes: usize,
        edges: Vec<(usize, usize)>,
        attributes: Matrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::Contract("graph must have at least one node".into()));
        }
        if attributes.rows() != n_nodes {
            return Err(Error::Contract(format!(
                "attribute matrix has {} rows for {n_nodes} nodes",
                attributes.rows()
            )));
        }
        let mut seen = BTreeSet::new();
        let mut stored = Vec::with_capacity(edges.len());
        for (k, &(u, v)) in edges.iter().enumerate() {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::Contract(format!(
                    "edge {k} ({u}, {v}) has an endpoint outside [0, {n_nodes})"
                )));
            }
            if u == v {
                return Err(Error::Contract(format!("edge {k} is a self-loop on node {u}")));
            }
            let e = (u.min(v), u.max(v));
            if !seen.insert(e) {
                return Err(Error::Contract(format!("edge {k} ({u}, {v}) is a duplicate")));
            }
            stored.push(e);
        }
        if let Some(l) = &labels {
            if l.len() != n_nodes {
                return Err(Error::Contract(format!(
                    "{} labels for {n_nodes} nodes",
                    l.len()
                )));
            }
        }
        if !attributes.is_finite() {
            return Err(Error::Contract("attributes contain non-finite values".into()));
        }
        Ok(Self {
            n_nodes,
            edges: stored,
            attributes,
            labels,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn attributes(&self) -> &Matrix {
        &self.attributes
    }

    pub fn feature_dim(&self) -> usize {
        self.attributes.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of classes implied by the labels (largest label + 1).
    pub fn n_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Symmetric 0/1 adjacency with zero diagonal.
    pub fn adjacency_dense(&self) -> Matrix {
        adjacency_from_edges(self.n_nodes, self.edges.iter().copied())
    }

    /// Random-walk normalization `D⁻¹(A + I)`; every row sums to one.
    pub fn normalize_rw(&self) -> Matrix {
        let mut a = self.adjacency_dense();
        for i in 0..self.n_nodes {
            a[(i, i)] += 1.0;
        }
        for i in 0..self.n_nodes {
            let deg: f64 = a.row(i).sum();
            for j in 0..self.n_nodes {
                a[(i, j)] /= deg;
            }
        }
        a
    }

    /// Symmetrically normalized adjacency of the unmodified graph.
    pub fn normalized_adjacency(&self) -> Matrix {
        normalize_sym(&self.adjacency_dense()).expect("graph adjacency is always symmetric")
    }
}

fn adjacency_from_edges(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for (u, v) in edges {
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    a
}

/// `D̂^{-1/2}(adj + I)D̂^{-1/2}` with `D̂` the degree matrix of `adj + I`.
pub fn normalize_sym(adj: &Matrix) -> Result<Matrix> {
    let n = adj.rows();
    if adj.cols() != n {
        return Err(Error::Shape {
            op: "normalize_sym",
            left: adj.shape(),
            right: (n, n),
        });
    }
    if !adj.is_symmetric(1e-12) {
        return Err(Error::Contract("normalize_sym needs a symmetric adjacency".into()));
    }
    if let Some(idx) = adj.as_slice().iter().position(|&v| v < 0.0) {
        return Err(Error::Contract(format!(
            "normalize_sym needs nonnegative weights; entry ({}, {}) is negative",
            idx / n,
            idx % n
        )));
    }
    if let Some(i) = (0..n).find(|&i| adj[(i, i)] != 0.0) {
        return Err(Error::Contract(format!(
            "normalize_sym needs a zero diagonal; entry ({i}, {i}) is nonzero"
        )));
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / (adj.row(i).sum() + 1.0).sqrt())
        .collect();
    Ok(Matrix::from_fn(n, n, |(i, j)| {
        let a = adj[(i, j)] + if i == j { 1.0 } else { 0.0 };
        a * inv_sqrt[i] * inv_sqrt[j]
    }))
}

/// Parameters of the two-view distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionConfig {
    /// Mean of the multiplicative Gaussian feature noise.
    pub noise_mean: f64,
    /// Standard deviation of the multiplicative noise.
    pub noise_std: f64,
    /// Fraction of edges removed from the first view.
    pub mask_fraction: f64,
    /// PPR teleport probability.
    pub teleport_alpha: f64,
    /// Extra seed mixed into the noise stream.
    pub seed: u64,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self {
            noise_mean: 1.0,
            noise_std: 0.1,
            mask_fraction: 0.10,
            teleport_alpha: 0.2,
            seed: 0,
        }
    }
}

impl DistortionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mask_fraction) {
            return Err(Error::Contract(format!(
                "mask_fraction {} must lie in [0, 1)",
                self.mask_fraction
            )));
        }
        if !(self.teleport_alpha > 0.0 && self.teleport_alpha < 1.0) {
            return Err(Error::Contract(format!(
                "teleport_alpha {} must lie in (0, 1)",
                self.teleport_alpha
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_mean.is_finite() || !self.noise_std.is_finite() {
            return Err(Error::Contract(format!(
                "noise parameters ({}, {}) are invalid",
                self.noise_mean, self.noise_std
            )));
        }
        Ok(())
    }
}

/// `X ⊙ N` with `N` drawn i.i.d. from `Gaussian(noise_mean, noise_std)`.
pub fn corrupt_features<R: Rng + ?Sized>(x: &Matrix, cfg: &DistortionConfig, rng: &mut R) -> Matrix {
    if cfg.noise_std == 0.0 {
        return x.scale(cfg.noise_mean);
    }
    let normal = Normal::new(cfg.noise_mean, cfg.noise_std).expect("validated noise parameters");
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        *v *= normal.sample(rng);
    }
    out
}

/// Edges that survive masking, in their original order.
///
/// The `⌊mask_fraction · |E|⌋` edges with the lowest endpoint cosine
/// similarity are dropped; ties go to the earlier edge.
pub fn surviving_edges(g: &Graph, latent: &Matrix, cfg: &DistortionConfig) -> Result<Vec<(usize, usize)>> {
    if latent.rows() != g.n_nodes() {
        return Err(Error::Shape {
            op: "mask_edges",
            left: latent.shape(),
            right: (g.n_nodes(), latent.cols()),
        });
    }
    let norms: Vec<f64> = (0..latent.rows())
        .map(|i| latent.row(i).dot(&latent.row(i)).sqrt())
        .collect();
    if let Some(row) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::DegenerateRow {
            op: "mask_edges",
            row,
        });
    }
    let sims: Vec<f64> = g
        .edges()
        .iter()
        .map(|&(u, v)| latent.row(u).dot(&latent.row(v)) / (norms[u] * norms[v]))
        .collect();
    let n_drop = (cfg.mask_fraction * g.n_edges() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..g.n_edges()).collect();
    // Stable sort keeps edge-list order among equal similarities.
    order.sort_by(|&a, &b| sims[a].total_cmp(&sims[b]));
    let mut keep = vec![true; g.n_edges()];
    for &k in &order[..n_drop] {
        keep[k] = false;
    }
    Ok(g.edges()
        .iter()
        .zip(keep)
        .filter_map(|(&e, k)| k.then_some(e))
        .collect())
}

/// Normalized edge-masked adjacency `A^m`.
pub fn mask_edges(g: &Graph, latent: &Matrix, cfg: &DistortionConfig) -> Result<Matrix> {
    let kept = surviving_edges(g, latent, cfg)?;
    normalize_sym(&adjacency_from_edges(g.n_nodes(), kept.into_iter()))
}

/// Personalized-PageRank diffusion `α(I − (1 − α)·normalize_sym(A))⁻¹`.
pub fn ppr_diffusion(g: &Graph, cfg: &DistortionConfig) -> Result<Matrix> {
    let alpha = cfg.teleport_alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("teleport_alpha {alpha} must lie in (0, 1)")));
    }
    let n = g.n_nodes();
    let m = g.normalized_adjacency();
    let system = Matrix::from_fn(n, n, |(i, j)| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - (1.0 - alpha) * m[(i, j)]
    });
    let mut d = system.solve(&Matrix::identity(n).scale(alpha))?;
    // The exact inverse is symmetric; average out rounding asymmetry.
    let t = d.transpose();
    for (v, w) in d.as_mut_slice().iter_mut().zip(t.as_slice()) {
        *v = 0.5 * (*v + w);
    }
    Ok(d)
}

/// The two distorted views sharing one corrupted attribute matrix.
#[derive(Debug, Clone)]
pub struct TwoViews {
    pub features: Matrix,
    pub masked_adjacency: Matrix,
    pub diffusion: Matrix,
}

impl TwoViews {
    /// `(X̃, A^m)`
    pub fn view1(&self) -> (&Matrix, &Matrix) {
        (&self.features, &self.masked_adjacency)
    }

    /// `(X̃, A^d)`
    pub fn view2(&self) -> (&Matrix, &Matrix) {
        (&self.features, &self.diffusion)
    }
}

pub fn make_views<R: Rng + ?Sized>(
    g: &Graph,
    latent: &Matrix,
    cfg: &DistortionConfig,
    rng: &mut R,
) -> Result<TwoViews> {
    cfg.validate()?;
    let masked_adjacency = mask_edges(g, latent, cfg)?;
    let diffusion = ppr_diffusion(g, cfg)?;
    let features = corrupt_features(g.attributes(), cfg, rng);
    Ok(TwoViews {
        features,
        masked_adjacency,
        diffusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(n, edges.to_vec(), Matrix::ones(n, 2), None).unwrap()
    }

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn rejects_invalid_edges() {
        let x = Matrix::ones(3, 1);
        assert!(Graph::new(3, vec![(0, 3)], x.clone(), None).is_err());
        assert!(Graph::new(3, vec![(1, 1)], x.clone(), None).is_err());
        assert!(Graph::new(3, vec![(0, 1), (1, 0)], x.clone(), None).is_err());
        assert!(Graph::new(3, vec![], x.clone(), Some(vec![0, 1])).is_err());
        assert!(Graph::new(3, vec![(0, 2)], x, Some(vec![0, 1, 1])).is_ok());
    }

    #[test]
    fn adjacency_examples() {
        assert_eq!(graph(2, &[(0, 1)]).adjacency_dense(), m(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert_eq!(graph(3, &[]).adjacency_dense(), Matrix::zeros(3, 3));
        let tri = graph(3, &[(0, 1), (1, 2), (0, 2)]).adjacency_dense();
        assert_eq!(tri, Matrix::from_fn(3, 3, |(i, j)| if i == j { 0.0 } else { 1.0 }));
    }

    #[test]
    fn random_walk_examples() {
        assert_eq!(graph(1, &[]).normalize_rw(), Matrix::identity(1));
        assert_eq!(graph(2, &[(0, 1)]).normalize_rw(), Matrix::filled(2, 2, 0.5));
        assert_eq!(graph(2, &[]).normalize_rw(), Matrix::identity(2));
    }

    #[test]
    fn symmetric_examples() {
        assert_eq!(normalize_sym(&Matrix::zeros(1, 1)).unwrap(), Matrix::identity(1));
        let path = normalize_sym(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!(path.max_abs_diff(&Matrix::filled(2, 2, 0.5)) < 1e-15);
        assert_eq!(normalize_sym(&Matrix::zeros(2, 2)).unwrap(), Matrix::identity(2));
        assert!(normalize_sym(&m(&[&[0.0, 1.0], &[0.0, 0.0]])).is_err());
    }

    #[test]
    fn noise_free_corruption_is_identity() {
        let cfg = DistortionConfig {
            noise_std: 0.0,
            ..Default::default()
        };
        let x = m(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(corrupt_features(&x, &cfg, &mut rng), x);
        let z = Matrix::zeros(2, 2);
        assert_eq!(corrupt_features(&z, &DistortionConfig::default(), &mut rng), z);
    }

    #[test]
    fn mask_count_is_floor_of_fraction() {
        let edges: Vec<_> = (0..10).map(|i| (i, i + 1)).collect();
        let g = graph(11, &edges);
        let latent = Matrix::from_fn(11, 2, |(i, j)| 1.0 + (i * (j + 1)) as f64);
        let cfg = DistortionConfig::default();
        assert_eq!(surviving_edges(&g, &latent, &cfg).unwrap().len(), 9);
    }

    #[test]
    fn mask_drops_least_similar_edge() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let latent = m(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let cfg = DistortionConfig {
            mask_fraction: 0.5,
            ..Default::default()
        };
        assert_eq!(surviving_edges(&g, &latent, &cfg).unwrap(), vec![(0, 1)]);
    }

    #[test]
    fn mask_ties_drop_earlier_edge() {
        let g = graph(3, &[(1, 2), (0, 1)]);
        let latent = Matrix::ones(3, 2);
        let cfg = DistortionConfig {
            mask_fraction: 0.5,
            ..Default::default()
        };
        assert_eq!(surviving_edges(&g, &latent, &cfg).unwrap(), vec![(0, 1)]);
    }

    #[test]
    fn zero_mask_is_plain_normalization() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let latent = Matrix::from_fn(4, 2, |(i, j)| (i + j + 1) as f64);
        let cfg = DistortionConfig {
            mask_fraction: 0.0,
            ..Default::default()
        };
        assert_eq!(mask_edges(&g, &latent, &cfg).unwrap(), g.normalized_adjacency());
    }

    #[test]
    fn mask_rejects_zero_latent_row() {
        let g = graph(2, &[(0, 1)]);
        let latent = m(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            mask_edges(&g, &latent, &DistortionConfig::default()),
            Err(Error::DegenerateRow { row: 1, .. })
        ));
    }

    #[test]
    fn ppr_examples() {
        let cfg = DistortionConfig::default();
        assert!(ppr_diffusion(&graph(1, &[]), &cfg).unwrap().max_abs_diff(&Matrix::identity(1)) < 1e-15);
        let path = ppr_diffusion(&graph(2, &[(0, 1)]), &cfg).unwrap();
        assert!(path.max_abs_diff(&m(&[&[0.6, 0.4], &[0.4, 0.6]])) < 1e-12, "{path:?}");
        let cfg = DistortionConfig {
            teleport_alpha: 0.7,
            ..Default::default()
        };
        assert!(ppr_diffusion(&graph(2, &[]), &cfg).unwrap().max_abs_diff(&Matrix::identity(2)) < 1e-15);
    }

    #[test]
    fn degenerate_views() {
        let g = graph(2, &[(0, 1)]);
        let cfg = DistortionConfig {
            noise_std: 0.0,
            mask_fraction: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let views = make_views(&g, &Matrix::ones(2, 2), &cfg, &mut rng).unwrap();
        assert_eq!(views.view1().0, g.attributes());
        assert_eq!(views.view1().1, &g.normalized_adjacency());
        assert!(views.view2().1.max_abs_diff(&m(&[&[0.6, 0.4], &[0.4, 0.6]])) < 1e-12);
        assert!(std::ptr::eq(views.view1().0, views.view2().0));
    }

    #[test]
    fn config_validation() {
        let bad = DistortionConfig {
            mask_fraction: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DistortionConfig {
            teleport_alpha: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(DistortionConfig::default().validate().is_ok());
    }
}
