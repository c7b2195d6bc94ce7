use crate::error::{Error, Result};

/// Minimum-cost perfect assignment on a square cost matrix.
///
/// Returns `assign` with `assign[row] = col`. O(n³) shortest augmenting
/// path with row and column potentials.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-indexed internally; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    assign
}

/// `c x c` contingency table: `table[cluster][class]` counts.
pub fn contingency(pred: &[usize], truth: &[usize], c: usize) -> Result<Vec<Vec<usize>>> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut table = vec![vec![0usize; c]; c];
    for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        if p >= c || t >= c {
            return Err(Error::Contract(format!(
                "label pair ({p}, {t}) at position {i} is outside [0, {c})"
            )));
        }
        table[p][t] += 1;
    }
    Ok(table)
}

/// Cluster-to-class bijection maximizing the number of matched nodes.
///
/// Returns `(mapping, matched)` where `mapping[cluster] = class`.
pub fn hungarian_map(pred: &[usize], truth: &[usize], c: usize) -> Result<(Vec<usize>, usize)> {
    let table = contingency(pred, truth, c)?;
    let cost: Vec<Vec<f64>> = table
        .iter()
        .map(|row| row.iter().map(|&n| -(n as f64)).collect())
        .collect();
    let mapping = min_cost_assignment(&cost);
    let matched = mapping
        .iter()
        .enumerate()
        .map(|(k, &j)| table[k][j])
        .sum();
    Ok((mapping, matched))
}
