mod common;

use std::collections::BTreeSet;
use std::fs;

use dcrn::data_io::{self, generate_sbm, load_dataset_dir, read_matrix_tsv, SbmSpec};
use dcrn::linalg::Matrix;
use dcrn::model::{checkpoint, ModelConfig, ModelParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::matrix_strategy;

fn edge_set(g: &dcrn::graph::Graph) -> BTreeSet<(usize, usize)> {
    g.edges().iter().copied().collect()
}

#[test]
fn dataset_directory_round_trip() {
    let g = generate_sbm(&SbmSpec {
        nodes_per_cluster: 12,
        seed: 4,
        ..SbmSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = data_io::write_dataset(&g, "blocks", dir.path()).unwrap();
    let (h, manifest, stats) = load_dataset_dir(dir.path()).unwrap();
    assert_eq!(manifest, written);
    assert_eq!(stats, Default::default());
    assert_eq!(edge_set(&g), edge_set(&h));
    assert_eq!(g.labels(), h.labels());
    let (a, b) = (g.attributes().as_slice(), h.attributes().as_slice());
    assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn sbm_is_bit_reproducible() {
    let spec = SbmSpec {
        seed: 21,
        ..SbmSpec::default()
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    data_io::write_dataset(&generate_sbm(&spec).unwrap(), "sbm", d1.path()).unwrap();
    data_io::write_dataset(&generate_sbm(&spec).unwrap(), "sbm", d2.path()).unwrap();
    for f in ["features.tsv", "edges.tsv", "labels.tsv", "manifest.json"] {
        assert_eq!(
            fs::read(d1.path().join(f)).unwrap(),
            fs::read(d2.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn default_sbm_has_150_labels_over_three_blocks() {
    let g = generate_sbm(&SbmSpec::default()).unwrap();
    let labels = g.labels().unwrap();
    assert_eq!(labels.len(), 150);
    assert_eq!(labels.iter().copied().collect::<BTreeSet<_>>(), BTreeSet::from([0, 1, 2]));
}

#[test]
fn noiseless_rows_repeat_within_a_block() {
    let spec = SbmSpec {
        feature_noise_std: 0.0,
        nodes_per_cluster: 5,
        ..SbmSpec::default()
    };
    let g = generate_sbm(&spec).unwrap();
    let x = g.attributes();
    for i in 0..g.n_nodes() {
        let first = (i / 5) * 5;
        assert_eq!(x.row_slice(i), x.row_slice(first));
    }
}

#[test]
fn within_block_edge_count_matches_expectation() {
    let spec = SbmSpec {
        n_clusters: 2,
        nodes_per_cluster: 10,
        p_in: 0.3,
        p_out: 0.05,
        ..SbmSpec::default()
    };
    let seeds = 200;
    let mut within = 0usize;
    for seed in 0..seeds {
        let g = generate_sbm(&SbmSpec { seed, ..spec.clone() }).unwrap();
        let labels = g.labels().unwrap();
        within += g.edges().iter().filter(|&&(u, v)| labels[u] == labels[v]).count();
    }
    let mean_per_block = within as f64 / (seeds as f64 * 2.0);
    let expected = 0.3 * 10.0 * 9.0 / 2.0;
    assert!(
        (mean_per_block - expected).abs() <= 0.05 * expected,
        "{mean_per_block} vs {expected}"
    );
}

#[test]
fn pi_survives_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.tsv");
    let z = Matrix::from_rows(&[[std::f64::consts::PI]]).unwrap();
    data_io::dump_embedding(&z, &path).unwrap();
    assert_eq!(read_matrix_tsv(&path).unwrap()[(0, 0)], 3.141592653589793);
}

#[test]
fn zero_matrix_dumps_literal_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.tsv");
    data_io::dump_embedding(&Matrix::zeros(2, 2), &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    for tok in text.split_whitespace() {
        assert_eq!(tok.parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn edge_count_mismatch_is_reported() {
    let g = generate_sbm(&SbmSpec {
        nodes_per_cluster: 6,
        ..SbmSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    data_io::write_dataset(&g, "x", dir.path()).unwrap();
    let edges = dir.path().join("edges.tsv");
    let mut text = fs::read_to_string(&edges).unwrap();
    text.push_str("0\t0\n");
    let (u, v) = g.edges()[0];
    text.push_str(&format!("{v}\t{u}\n"));
    fs::write(&edges, text).unwrap();
    // Self-loop and reversed duplicate are dropped, so the manifest still matches.
    let (_, _, stats) = load_dataset_dir(dir.path()).unwrap();
    assert_eq!((stats.self_loops_dropped, stats.duplicates_dropped), (1, 1));

    let fewer: String = g.edges()[1..].iter().map(|(u, v)| format!("{u}\t{v}\n")).collect();
    fs::write(&edges, fewer).unwrap();
    let err = load_dataset_dir(dir.path()).unwrap_err();
    assert!(matches!(err, dcrn::Error::Manifest(_)), "{err}");
}

#[test]
fn checkpoint_file_round_trip() {
    let cfg = ModelConfig {
        hidden_dim: 7,
        latent_dim: 3,
        ..ModelConfig::new(5, 4)
    };
    let p = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.bin");
    checkpoint::save(&path, &p.named()).unwrap();
    let q = ModelParams::from_named(checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(p, q);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn embedding_dump_is_bit_exact(z in matrix_strategy(5, 3, 1e6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.tsv");
        data_io::dump_embedding(&z, &path).unwrap();
        let back = read_matrix_tsv(&path).unwrap();
        prop_assert_eq!(back.shape(), (5, 3));
        for (a, b) in z.as_slice().iter().zip(back.as_slice()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn sbm_labels_cover_every_block(c in 1usize..6, per in 1usize..8, seed in 0u64..1000) {
        let g = generate_sbm(&SbmSpec { n_clusters: c, nodes_per_cluster: per, seed, ..SbmSpec::default() }).unwrap();
        let distinct: BTreeSet<usize> = g.labels().unwrap().iter().copied().collect();
        prop_assert_eq!(distinct.len(), c);
    }
}
