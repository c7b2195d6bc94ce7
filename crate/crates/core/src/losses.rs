//! Training objectives.
//!
//! Every function records its computation on the caller's [`Tape`] and
//! returns a 1x1 node, so all of them can be differentiated together.
//!
//! The correlation losses use the term-by-term weighting: the diagonal of the
//! cross-view correlation matrix is pulled toward one and the off-diagonal
//! entries toward zero, each term with its own normalizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Tape, Var};

/// Weights of the regularization and clustering terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the propagation regularizer.
    pub gamma: f64,
    /// Weight of the KL clustering loss.
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gamma: 1e3,
            lambda: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::Contract(format!(
                "loss weights must be nonnegative (gamma {}, lambda {})",
                self.gamma, self.lambda
            )));
        }
        Ok(())
    }
}

/// Which of the optional terms enter the total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gates {
    pub sample: bool,
    pub feature: bool,
    pub propagation: bool,
}

impl Gates {
    pub const ALL: Gates = Gates {
        sample: true,
        feature: true,
        propagation: true,
    };
    pub const NONE: Gates = Gates {
        sample: false,
        feature: false,
        propagation: false,
    };
}

/// Values of every loss term from one forward pass.
///
/// The component fields hold the raw values whether or not they were gated
/// into `total`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub l_n: f64,
    pub l_f: f64,
    pub l_r: f64,
    pub l_rec: f64,
    pub l_kl: f64,
    pub total: f64,
}

/// Nodes of the individual terms.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub l_n: Var,
    pub l_f: Var,
    pub l_r: Var,
    pub l_rec: Var,
    pub l_kl: Var,
}

fn correlation_loss(
    tape: &mut Tape,
    a: Var,
    b: Var,
    diag_weight: f64,
    off_weight: f64,
) -> Result<Var> {
    let s = tape.cosine_matrix(a, b)?;
    let n = tape.shape(s).0;
    let eye = tape.constant(Matrix::identity(n));
    let off_mask = tape.constant(Matrix::from_fn(n, n, |(i, j)| if i == j { 0.0 } else { 1.0 }));

    let diag = tape.hadamard(s, eye)?;
    let diag_gap = tape.sub(diag, eye)?;
    let diag_sq = tape.square(diag_gap)?;
    let diag_sum = tape.sum(diag_sq)?;
    let diag_term = tape.scalar_mul(diag_sum, diag_weight)?;

    let off = tape.hadamard(s, off_mask)?;
    let off_sq = tape.square(off)?;
    let off_sum = tape.sum(off_sq)?;
    let off_term = tape.scalar_mul(off_sum, off_weight)?;

    tape.add(diag_term, off_term)
}

fn check_pair(tape: &Tape, op: &'static str, a: Var, b: Var) -> Result<usize> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa != sb {
        return Err(Error::Shape {
            op,
            left: sa,
            right: sb,
        });
    }
    if sa.0 < 2 {
        return Err(Error::Contract(format!(
            "{op} needs at least two rows for the off-diagonal term, got {}",
            sa.0
        )));
    }
    Ok(sa.0)
}

/// Sample-level correlation reduction between two `N x d` view embeddings.
///
/// `(1/N) Σᵢ (Sᵢᵢ − 1)² + (1/(N² − N)) Σ_{i≠j} Sᵢⱼ²` over the cross-view
/// cosine matrix `S`.
pub fn loss_scr(tape: &mut Tape, z1: Var, z2: Var) -> Result<Var> {
    let n = check_pair(tape, "loss_scr", z1, z2)? as f64;
    correlation_loss(tape, z1, z2, 1.0 / n, 1.0 / (n * n - n))
}

/// Feature-level correlation reduction between two `d x K` cluster-level embeddings.
///
/// `(1/d²) Σᵢ (Sᵢᵢ − 1)² + (1/(d² − d)) Σ_{i≠j} Sᵢⱼ²` with `S` taken between
/// feature rows.
pub fn loss_fcr(tape: &mut Tape, zt1: Var, zt2: Var) -> Result<Var> {
    let d = check_pair(tape, "loss_fcr", zt1, zt2)? as f64;
    correlation_loss(tape, zt1, zt2, 1.0 / (d * d), 1.0 / (d * d - d))
}

// Σ p ln p, entries of p strictly positive.
fn neg_entropy_sum(tape: &mut Tape, p: Var) -> Result<Var> {
    let lp = tape.log(p)?;
    let plp = tape.hadamard(p, lp)?;
    tape.sum(plp)
}

/// Mean Jensen–Shannon divergence between row-softmaxed `a` and `b`.
pub fn jsd_rows(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa != sb {
        return Err(Error::Shape {
            op: "jsd_rows",
            left: sa,
            right: sb,
        });
    }
    let p = tape.row_softmax(a)?;
    let q = tape.row_softmax(b)?;
    let pq = tape.add(p, q)?;
    let m = tape.scalar_mul(pq, 0.5)?;
    // JSD = ½ Σ p ln p + ½ Σ q ln q − Σ m ln m
    let hp = neg_entropy_sum(tape, p)?;
    let hq = neg_entropy_sum(tape, q)?;
    let hm = neg_entropy_sum(tape, m)?;
    let half = tape.add(hp, hq)?;
    let half = tape.scalar_mul(half, 0.5)?;
    let total = tape.sub(half, hm)?;
    tape.scalar_mul(total, 1.0 / sa.0 as f64)
}

/// Propagation regularizer `JSD(Z, Ã·Z)`.
pub fn loss_preg(tape: &mut Tape, z: Var, a_norm: Var) -> Result<Var> {
    let propagated = tape.matmul(a_norm, z)?;
    jsd_rows(tape, z, propagated)
}

/// `(1/(N·D))‖X − X̂‖² + (1/N²)‖Ã − Â‖²`
pub fn loss_rec(tape: &mut Tape, x: Var, x_hat: Var, a_norm: Var, a_hat: Var) -> Result<Var> {
    let (n, d) = tape.shape(x);
    let dx = tape.sub(x, x_hat)?;
    let dx2 = tape.square(dx)?;
    let sx = tape.sum(dx2)?;
    let attr = tape.scalar_mul(sx, 1.0 / (n * d) as f64)?;

    let na = tape.shape(a_norm).0;
    let da = tape.sub(a_norm, a_hat)?;
    let da2 = tape.square(da)?;
    let sa = tape.sum(da2)?;
    let structure = tape.scalar_mul(sa, 1.0 / (na * na) as f64)?;
    tape.add(attr, structure)
}

/// `KL(P‖Q) / N` with `P` held constant and `0·ln(0/q) = 0`.
pub fn loss_kl(tape: &mut Tape, p: &Matrix, q: Var) -> Result<Var> {
    let qv = tape.value(q);
    if p.shape() != qv.shape() {
        return Err(Error::Shape {
            op: "loss_kl",
            left: p.shape(),
            right: qv.shape(),
        });
    }
    let c = qv.cols();
    if let Some(idx) = p
        .as_slice()
        .iter()
        .zip(qv.as_slice())
        .position(|(&pv, &qv)| pv > 0.0 && qv <= 0.0)
    {
        return Err(Error::Domain {
            op: "loss_kl",
            index: (idx / c, idx % c),
            value: qv.as_slice()[idx],
        });
    }
    let n = p.rows() as f64;
    let plogp: f64 = p
        .as_slice()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum();
    let pc = tape.constant(p.clone());
    let logq = tape.log(q)?;
    let cross = tape.hadamard(pc, logq)?;
    let cross = tape.sum(cross)?;
    let neg = tape.scalar_mul(cross, -1.0 / n)?;
    tape.add_scalar(neg, plogp / n)
}

/// Gated weighted sum `l_n + l_f + γ·l_r + l_rec + λ·l_kl`.
pub fn total_loss(
    tape: &mut Tape,
    parts: &LossParts,
    w: &LossWeights,
    gates: Gates,
) -> Result<(Var, LossReport)> {
    let kl = tape.scalar_mul(parts.l_kl, w.lambda)?;
    let mut total = tape.add(parts.l_rec, kl)?;
    if gates.sample {
        total = tape.add(total, parts.l_n)?;
    }
    if gates.feature {
        total = tape.add(total, parts.l_f)?;
    }
    if gates.propagation {
        let r = tape.scalar_mul(parts.l_r, w.gamma)?;
        total = tape.add(total, r)?;
    }
    let report = LossReport {
        l_n: tape.scalar(parts.l_n),
        l_f: tape.scalar(parts.l_f),
        l_r: tape.scalar(parts.l_r),
        l_rec: tape.scalar(parts.l_rec),
        l_kl: tape.scalar(parts.l_kl),
        total: tape.scalar(total),
    };
    Ok((total, report))
}

impl LossReport {
    /// Recomputes the gated total from the components.
    pub fn weighted_total(&self, w: &LossWeights, gates: Gates) -> f64 {
        let mut t = self.l_rec + w.lambda * self.l_kl;
        if gates.sample {
            t += self.l_n;
        }
        if gates.feature {
            t += self.l_f;
        }
        if gates.propagation {
            t += w.gamma * self.l_r;
        }
        t
    }
}
