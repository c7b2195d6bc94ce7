mod common;

use approx::assert_abs_diff_eq;
use dcrn::graph::{self, DistortionConfig, Graph};
use dcrn::linalg::Matrix;
use dcrn::model::{ModelConfig, ModelParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{assert_close, graph_strategy};

fn alpha(a: f64) -> DistortionConfig {
    DistortionConfig {
        teleport_alpha: a,
        ..DistortionConfig::default()
    }
}

// Symmetric normalization over A + I, computed entry by entry from the edge list.
fn sym_norm_from_edges(g: &Graph) -> Matrix {
    let n = g.n_nodes();
    let mut deg = vec![1.0; n];
    for &(u, v) in g.edges() {
        deg[u] += 1.0;
        deg[v] += 1.0;
    }
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0 / deg[i];
    }
    for &(u, v) in g.edges() {
        let w = 1.0 / (deg[u] * deg[v]).sqrt();
        m[(u, v)] = w;
        m[(v, u)] = w;
    }
    m
}

// α Σ_{k<terms} ((1 − α) S)^k
fn neumann(s: &Matrix, a: f64, terms: usize) -> Matrix {
    let n = s.rows();
    let step = s.scale(1.0 - a);
    let mut power = Matrix::identity(n);
    let mut sum = Matrix::zeros(n, n);
    for _ in 0..terms {
        sum = sum.add(&power).unwrap();
        power = power.dot(&step).unwrap();
    }
    sum.scale(a)
}

#[test]
fn two_node_path_diffusion() {
    let g = Graph::new(2, vec![(0, 1)], Matrix::zeros(2, 1), None).unwrap();
    let d = graph::ppr_diffusion(&g, &alpha(0.2)).unwrap();
    let want = Matrix::from_rows(&[[0.6, 0.4], [0.4, 0.6]]).unwrap();
    assert_close(&d, &want, 1e-9);
}

#[test]
fn isolated_nodes_diffuse_to_themselves() {
    let g = Graph::new(3, vec![], Matrix::zeros(3, 1), None).unwrap();
    let d = graph::ppr_diffusion(&g, &alpha(0.3)).unwrap();
    assert_close(&d, &Matrix::identity(3), 1e-12);
}

#[test]
fn masking_removes_least_similar_edges() {
    let edges: Vec<(usize, usize)> = (0..10)
        .flat_map(|u| (u + 1..10).map(move |v| (u, v)))
        .filter(|&(u, v)| (u + v) % 3 == 0)
        .collect();
    let n_edges = edges.len();
    let g = Graph::new(10, edges, Matrix::zeros(10, 1), None).unwrap();
    let latent = Matrix::from_fn(10, 2, |(i, j)| ((i * 7 + j * 3) % 5) as f64 + 0.5);
    let kept = graph::surviving_edges(&g, &latent, &DistortionConfig::default()).unwrap();
    assert_eq!(kept.len(), n_edges - n_edges / 10);

    let cos = |(u, v): (usize, usize)| {
        let (a, b) = (latent.row_slice(u), latent.row_slice(v));
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let min_kept = kept.iter().map(|&e| cos(e)).fold(f64::INFINITY, f64::min);
    for &e in g.edges().iter().filter(|e| !kept.contains(e)) {
        assert!(cos(e) <= min_kept + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diffusion_matches_neumann_series(g in graph_strategy(1..=10, 1), a in 0.05f64..0.95) {
        let d = graph::ppr_diffusion(&g, &alpha(a)).unwrap();
        // Spectral radius of (1 − α)S is at most 1 − α, so enough terms make the tail negligible.
        let terms = if a >= 0.2 { 200 } else { 200.max((40.0 / a) as usize) };
        let series = neumann(&sym_norm_from_edges(&g), a, terms);
        prop_assert!(d.max_abs_diff(&series) <= 1e-6, "diff {}", d.max_abs_diff(&series));
        prop_assert!(d.is_symmetric(1e-12));
        prop_assert!(d.as_slice().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn diffusion_at_default_alpha_matches_200_terms(g in graph_strategy(1..=10, 1)) {
        let d = graph::ppr_diffusion(&g, &alpha(0.2)).unwrap();
        let series = neumann(&sym_norm_from_edges(&g), 0.2, 200);
        prop_assert!(d.max_abs_diff(&series) <= 1e-6);
    }

    #[test]
    fn symmetric_normalization_matches_edge_formula(g in graph_strategy(1..=12, 1)) {
        assert_close(&g.normalized_adjacency(), &sym_norm_from_edges(&g), 1e-15);
    }

    #[test]
    fn random_walk_rows_sum_to_one(g in graph_strategy(1..=15, 1)) {
        let rw = g.normalize_rw();
        for i in 0..g.n_nodes() {
            let s: f64 = rw.row_slice(i).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12, "row {} sums to {}", i, s);
        }
    }

    #[test]
    fn masked_edge_count(g in graph_strategy(2..=12, 3), frac in 0.0f64..0.9) {
        let cfg = DistortionConfig { mask_fraction: frac, ..DistortionConfig::default() };
        let latent = Matrix::from_fn(g.n_nodes(), 3, |(i, j)| ((i * 5 + j * 3) % 7) as f64 + 1.0);
        let kept = graph::surviving_edges(&g, &latent, &cfg).unwrap();
        let dropped = (frac * g.n_edges() as f64).floor() as usize;
        prop_assert_eq!(kept.len(), g.n_edges() - dropped);
    }

    #[test]
    fn encoder_is_permutation_equivariant(g in graph_strategy(3..=9, 3), seed in 0u64..1000) {
        let n = g.n_nodes();
        let cfg = ModelConfig { hidden_dim: 5, latent_dim: 2, ..ModelConfig::new(3, 2) };
        let params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        // Reverse the node order.
        let perm: Vec<usize> = (0..n).rev().collect();
        let edges = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let x = g.attributes();
        let px = Matrix::from_fn(n, 3, |(i, j)| x[(perm[i], j)]);
        let h = Graph::new(n, edges, px.clone(), None).unwrap();

        let z = params.embed(x, &g.normalized_adjacency()).unwrap();
        let pz = params.embed(&px, &h.normalized_adjacency()).unwrap();
        for i in 0..n {
            for j in 0..2 {
                assert_abs_diff_eq!(pz[(i, j)], z[(perm[i], j)], epsilon = 1e-12);
            }
        }
    }
}
