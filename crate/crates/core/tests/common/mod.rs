#![allow(dead_code)]

use dcrn::graph::Graph;
use dcrn::linalg::Matrix;
use proptest::prelude::*;

/// Random undirected graph with `n` nodes in `nodes` and `dim`-wide attributes.
pub fn graph_strategy(nodes: std::ops::RangeInclusive<usize>, dim: usize) -> impl Strategy<Value = Graph> {
    nodes.prop_flat_map(move |n| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(any::<bool>(), pairs),
            proptest::collection::vec(-2.0f64..2.0, n * dim),
        )
            .prop_map(move |(mask, attrs)| {
                let mut edges = Vec::new();
                let mut k = 0;
                for u in 0..n {
                    for v in u + 1..n {
                        if mask[k] {
                            edges.push((u, v));
                        }
                        k += 1;
                    }
                }
                Graph::new(n, edges, Matrix::from_vec(n, dim, attrs).unwrap(), None).unwrap()
            })
    })
}

pub fn matrix_strategy(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-scale..scale, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

/// Matrix whose rows all have norm at least 0.1.
pub fn nonzero_rows(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    matrix_strategy(rows, cols, 1.0).prop_map(|mut m| {
        for i in 0..m.rows() {
            let norm: f64 = m.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 0.1 {
                m[(i, 0)] += 1.0;
            }
        }
        m
    })
}

pub fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
    let d = a.max_abs_diff(b);
    assert!(d <= tol, "max abs diff {d:e} > {tol:e}\n{a:?}\n{b:?}");
}
