mod common;

use approx::assert_abs_diff_eq;
use dcrn::cluster_metrics::{self, hungarian_map, kmeans, kmeans_restarts, NmiNormalization};
use dcrn::linalg::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permutations(c: usize) -> Vec<Vec<usize>> {
    if c == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(c - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, c - 1);
            out.push(q);
        }
    }
    out
}

fn best_by_brute_force(pred: &[usize], truth: &[usize], c: usize) -> usize {
    permutations(c)
        .iter()
        .map(|perm| pred.iter().zip(truth).filter(|&(&p, &t)| perm[p] == t).count())
        .max()
        .unwrap()
}

#[test]
fn pair_counting_example() {
    let ari = cluster_metrics::ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
    assert_abs_diff_eq!(ari, -0.5, epsilon = 1e-12);
}

#[test]
fn hungarian_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100 {
        let c = 1 + trial % 4;
        let n = rng.random_range(c..=20);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let (mapping, matched) = hungarian_map(&pred, &truth, c).unwrap();
        assert_eq!(matched, best_by_brute_force(&pred, &truth, c), "trial {trial}");
        let mut sorted = mapping.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..c).collect::<Vec<_>>(), "mapping must be a bijection");
        let realized = pred.iter().zip(&truth).filter(|&(&p, &t)| mapping[p] == t).count();
        assert_eq!(realized, matched);
    }
}

#[test]
fn independent_labelings_have_near_zero_ari() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 200;
    let mean: f64 = (0..trials)
        .map(|_| {
            let a: Vec<usize> = (0..100).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<usize> = (0..100).map(|_| rng.random_range(0..4)).collect();
            cluster_metrics::ari(&a, &b).unwrap()
        })
        .sum::<f64>()
        / trials as f64;
    assert!((-0.05..=0.05).contains(&mean), "{mean}");
}

fn blobs(seed: u64, per: usize, centers: &[[f64; 2]]) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = per * centers.len();
    Matrix::from_fn(n, 2, |(i, j)| centers[i / per][j] + rng.random_range(-0.5..0.5))
}

#[test]
fn restarts_never_lose_to_any_single_seed() {
    let z = blobs(2, 15, &[[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [3.0, 3.0]]);
    let best = kmeans_restarts(&z, 4, 100, 10).unwrap();
    for s in 100..110 {
        let single = kmeans(&z, 4, s).unwrap();
        assert!(best.inertia <= single.inertia + 1e-12);
    }
    // Separated blobs: the optimum puts each blob in its own cluster.
    let truth: Vec<usize> = (0..60).map(|i| i / 15).collect();
    let r = cluster_metrics::metrics(&best.assignments, &truth).unwrap();
    assert_eq!(r.acc, 1.0);
}

#[test]
fn kmeans_inertia_matches_its_assignment() {
    let z = blobs(9, 10, &[[0.0, 0.0], [2.0, 2.0]]);
    let r = kmeans(&z, 2, 0).unwrap();
    let recomputed: f64 = (0..z.rows())
        .map(|i| {
            let k = r.assignments[i];
            (0..2).map(|j| (z[(i, j)] - r.centers[(k, j)]).powi(2)).sum::<f64>()
        })
        .sum();
    assert_abs_diff_eq!(r.inertia, recomputed, epsilon = 1e-9);
}

fn labels(max_c: usize, n: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0..max_c, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn relabeling_is_perfect(truth in labels(5, 30), seed in 0u64..1000) {
        let mut perm: Vec<usize> = (0..5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..5).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pred: Vec<usize> = truth.iter().map(|&t| perm[t]).collect();
        let r = cluster_metrics::metrics(&pred, &truth).unwrap();
        prop_assert_eq!(r.acc, 1.0);
        prop_assert_eq!(r.f1, 1.0);
        prop_assert!((r.nmi - 1.0).abs() <= 1e-12 || truth.iter().all(|&t| t == truth[0]));
        prop_assert!((r.ari - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn nmi_of_labeling_with_itself_is_one(x in labels(6, 25)) {
        let v = cluster_metrics::nmi(&x, &x, NmiNormalization::Arithmetic).unwrap();
        prop_assert!((v - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn nmi_and_ari_are_symmetric(a in labels(4, 20), b in labels(4, 20)) {
        for norm in [NmiNormalization::Arithmetic, NmiNormalization::Geometric] {
            let ab = cluster_metrics::nmi(&a, &b, norm).unwrap();
            let ba = cluster_metrics::nmi(&b, &a, norm).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
        let ab = cluster_metrics::ari(&a, &b).unwrap();
        prop_assert!((ab - cluster_metrics::ari(&b, &a).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn scores_lie_in_range(a in labels(4, 20), b in labels(4, 20)) {
        let r = cluster_metrics::metrics(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.acc));
        prop_assert!((0.0..=1.0).contains(&r.f1));
        prop_assert!(r.ari <= 1.0 + 1e-12);
    }

    #[test]
    fn lloyd_never_increases_inertia(
        pts in proptest::collection::vec(-5.0f64..5.0, 40),
        c in 1usize..=5,
        seed in 0u64..500,
    ) {
        let z = Matrix::from_vec(20, 2, pts).unwrap();
        let r = kmeans(&z, c, seed).unwrap();
        for w in r.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", r.inertia_history);
        }
        let mut sizes = vec![0usize; c];
        for &a in &r.assignments {
            sizes[a] += 1;
        }
        prop_assert!(sizes.iter().all(|&s| s > 0), "empty cluster: {:?}", sizes);
    }

    #[test]
    fn kmeans_is_deterministic(pts in proptest::collection::vec(-5.0f64..5.0, 30), seed in 0u64..100) {
        let z = Matrix::from_vec(15, 2, pts).unwrap();
        prop_assert_eq!(kmeans(&z, 3, seed).unwrap().assignments, kmeans(&z, 3, seed).unwrap().assignments);
    }
}
