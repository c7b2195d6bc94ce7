//! Siamese graph-convolutional autoencoder and clustering head.
//!
//! The encoder is a two-layer GCN, `Z = Â·relu(Â·X·W₁)·W₂`, applied with the
//! same weights to both views. The decoder mirrors it to rebuild the
//! attributes, and `sigmoid(Z·Zᵀ)` rebuilds the structure. Cluster
//! membership uses a Student's-t kernel with one degree of freedom.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Tape, Var};

pub mod checkpoint;

/// Layer sizes of the autoencoder and the clustering head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub n_clusters: usize,
    /// Number of cluster-level columns produced by the readout.
    pub readout_k: usize,
}

impl ModelConfig {
    pub const DEFAULT_HIDDEN: usize = 256;
    pub const DEFAULT_LATENT: usize = 20;

    /// Default sizes for a dataset, with `readout_k = n_clusters`.
    pub fn new(input_dim: usize, n_clusters: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: Self::DEFAULT_HIDDEN,
            latent_dim: Self::DEFAULT_LATENT,
            n_clusters,
            readout_k: n_clusters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("latent_dim", self.latent_dim),
            ("n_clusters", self.n_clusters),
            ("readout_k", self.readout_k),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Contract(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Trainable weights. Encoder weights are shared by both views.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub enc_w1: Matrix,
    pub enc_w2: Matrix,
    pub dec_w1: Matrix,
    pub dec_w2: Matrix,
    /// Cluster centers, one row per cluster.
    pub centers: Matrix,
}

impl ModelParams {
    pub const NAMES: [&'static str; 5] = ["enc_w1", "enc_w2", "dec_w1", "dec_w2", "centers"];

    /// Uniform `[-1/√fan_in, 1/√fan_in]` weights; centers start at zero.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut layer = |fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Matrix::from_fn(fan_in, fan_out, |_| rng.random_range(-bound..=bound))
        };
        Ok(Self {
            enc_w1: layer(cfg.input_dim, cfg.hidden_dim),
            enc_w2: layer(cfg.hidden_dim, cfg.latent_dim),
            dec_w1: layer(cfg.latent_dim, cfg.hidden_dim),
            dec_w2: layer(cfg.hidden_dim, cfg.input_dim),
            centers: Matrix::zeros(cfg.n_clusters, cfg.latent_dim),
        })
    }

    pub fn matrices(&self) -> [&Matrix; 5] {
        [
            &self.enc_w1,
            &self.enc_w2,
            &self.dec_w1,
            &self.dec_w2,
            &self.centers,
        ]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix; 5] {
        [
            &mut self.enc_w1,
            &mut self.enc_w2,
            &mut self.dec_w1,
            &mut self.dec_w2,
            &mut self.centers,
        ]
    }

    pub fn named(&self) -> Vec<(&'static str, &Matrix)> {
        Self::NAMES.into_iter().zip(self.matrices()).collect()
    }

    /// Rebuilds parameters from named matrices; every name must be present once.
    pub fn from_named(mut entries: Vec<(String, Matrix)>) -> Result<Self> {
        let mut take = |name: &str| -> Result<Matrix> {
            let pos = entries
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))?;
            Ok(entries.swap_remove(pos).1)
        };
        let p = Self {
            enc_w1: take("enc_w1")?,
            enc_w2: take("enc_w2")?,
            dec_w1: take("dec_w1")?,
            dec_w2: take("dec_w2")?,
            centers: take("centers")?,
        };
        if let Some((name, _)) = entries.first() {
            return Err(Error::Contract(format!("unexpected parameter {name}")));
        }
        Ok(p)
    }

    /// Puts every parameter on `tape` as a differentiable leaf.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            enc_w1: tape.param(self.enc_w1.clone()),
            enc_w2: tape.param(self.enc_w2.clone()),
            dec_w1: tape.param(self.dec_w1.clone()),
            dec_w2: tape.param(self.dec_w2.clone()),
            centers: tape.param(self.centers.clone()),
        }
    }

    /// Embedding of one view, evaluated without recording gradients.
    pub fn embed(&self, x: &Matrix, adj: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = ParamVars {
            enc_w1: tape.constant(self.enc_w1.clone()),
            enc_w2: tape.constant(self.enc_w2.clone()),
            dec_w1: tape.constant(self.dec_w1.clone()),
            dec_w2: tape.constant(self.dec_w2.clone()),
            centers: tape.constant(self.centers.clone()),
        };
        let (x, adj) = (tape.constant(x.clone()), tape.constant(adj.clone()));
        let z = encode(&mut tape, x, adj, &vars)?;
        Ok(tape.value(z).clone())
    }
}

/// Tape handles of the parameters for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub enc_w1: Var,
    pub enc_w2: Var,
    pub dec_w1: Var,
    pub dec_w2: Var,
    pub centers: Var,
}

impl ParamVars {
    pub fn all(&self) -> [Var; 5] {
        [self.enc_w1, self.enc_w2, self.dec_w1, self.dec_w2, self.centers]
    }
}

/// `adj · x · w`, associated in whichever order is cheaper.
fn propagate(tape: &mut Tape, adj: Var, x: Var, w: Var) -> Result<Var> {
    let (n, k) = tape.shape(x);
    let m = tape.shape(w).1;
    let adj_first = n * n * k + n * k * m;
    let w_first = n * k * m + n * n * m;
    if adj_first <= w_first {
        let ax = tape.matmul(adj, x)?;
        tape.matmul(ax, w)
    } else {
        let xw = tape.matmul(x, w)?;
        tape.matmul(adj, xw)
    }
}

fn two_layer(tape: &mut Tape, x: Var, adj: Var, w1: Var, w2: Var) -> Result<Var> {
    let (n, _) = tape.shape(x);
    let (an, ac) = tape.shape(adj);
    if an != n || ac != n {
        return Err(Error::Shape {
            op: "gcn",
            left: (an, ac),
            right: tape.shape(x),
        });
    }
    let pre = propagate(tape, adj, x, w1)?;
    let h = tape.relu(pre)?;
    propagate(tape, adj, h, w2)
}

/// `adj · relu(adj · x · W₁) · W₂`
pub fn encode(tape: &mut Tape, x: Var, adj: Var, p: &ParamVars) -> Result<Var> {
    two_layer(tape, x, adj, p.enc_w1, p.enc_w2)
}

/// `adj · relu(adj · z · W₁') · W₂'`, the rebuilt attribute matrix.
pub fn decode_attributes(tape: &mut Tape, z: Var, adj: Var, p: &ParamVars) -> Result<Var> {
    two_layer(tape, z, adj, p.dec_w1, p.dec_w2)
}

/// `sigmoid(z · zᵀ)`, the rebuilt adjacency.
pub fn decode_structure(tape: &mut Tape, z: Var) -> Result<Var> {
    let zt = tape.transpose(z)?;
    let gram = tape.matmul(z, zt)?;
    tape.sigmoid(gram)
}

/// Arithmetic mean of the two view embeddings.
pub fn fuse(tape: &mut Tape, z1: Var, z2: Var) -> Result<Var> {
    let s = tape.add(z1, z2)?;
    tape.scalar_mul(s, 0.5)
}

/// Soft-assignment-weighted cluster means, a `d x K` matrix.
///
/// Column `k` is `Σᵢ q_ik zᵢ / Σᵢ q_ik`.
pub fn readout(tape: &mut Tape, z: Var, q: Var) -> Result<Var> {
    let (zn, qn) = (tape.shape(z).0, tape.shape(q).0);
    if zn != qn {
        return Err(Error::Shape {
            op: "readout",
            left: tape.shape(z),
            right: tape.shape(q),
        });
    }
    let mass = tape.col_sums(q)?;
    if let Some(column) = tape.value(mass).as_slice().iter().position(|&m| m <= 0.0) {
        return Err(Error::EmptyCluster { op: "readout", column });
    }
    let zt = tape.transpose(z)?;
    let pooled = tape.matmul(zt, q)?;
    let inv = tape.recip(mass)?;
    tape.mul_row(pooled, inv)
}

/// Student's-t soft assignment, `q_ij ∝ (1 + ‖zᵢ − μⱼ‖²)⁻¹`, rows normalized.
pub fn soft_assign(tape: &mut Tape, z: Var, centers: Var) -> Result<Var> {
    let d2 = tape.sq_dist(z, centers)?;
    let shifted = tape.add_scalar(d2, 1.0)?;
    let kernel = tape.recip(shifted)?;
    let totals = tape.row_sums(kernel)?;
    let inv = tape.recip(totals)?;
    tape.mul_col(kernel, inv)
}

/// Value-level [`soft_assign`].
pub fn soft_assignment(z: &Matrix, centers: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let (z, c) = (tape.constant(z.clone()), tape.constant(centers.clone()));
    let q = soft_assign(&mut tape, z, c)?;
    Ok(tape.value(q).clone())
}

/// Sharpened target `p_ij ∝ q_ij² / f_j` with `f_j = Σᵢ q_ij`.
pub fn target_dist(q: &Matrix) -> Matrix {
    let freq = q.col_sums();
    let mut p = Matrix::from_fn(q.rows(), q.cols(), |(i, j)| {
        let f = freq[(0, j)];
        if f > 0.0 {
            q[(i, j)] * q[(i, j)] / f
        } else {
            0.0
        }
    });
    for i in 0..p.rows() {
        let s: f64 = p.row(i).sum();
        if s > 0.0 {
            for j in 0..p.cols() {
                p[(i, j)] /= s;
            }
        }
    }
    p
}

/// Divides each row by its Euclidean norm; zero rows are left as is.
pub fn normalize_rows(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for i in 0..out.rows() {
        let n = out.row(i).dot(&out.row(i)).sqrt();
        if n > 0.0 {
            for j in 0..out.cols() {
                out[(i, j)] /= n;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn consts(tape: &mut Tape, p: &ModelParams) -> ParamVars {
        ParamVars {
            enc_w1: tape.constant(p.enc_w1.clone()),
            enc_w2: tape.constant(p.enc_w2.clone()),
            dec_w1: tape.constant(p.dec_w1.clone()),
            dec_w2: tape.constant(p.dec_w2.clone()),
            centers: tape.constant(p.centers.clone()),
        }
    }

    fn identity_params(n: usize) -> ModelParams {
        ModelParams {
            enc_w1: Matrix::identity(n),
            enc_w2: Matrix::identity(n),
            dec_w1: Matrix::identity(n),
            dec_w2: Matrix::identity(n),
            centers: Matrix::zeros(1, n),
        }
    }

    #[test]
    fn identity_encoder_is_relu() {
        let x = m(&[&[1.0, -2.0], &[-0.5, 3.0]]);
        let z = identity_params(2).embed(&x, &Matrix::identity(2)).unwrap();
        assert_eq!(z, x.map(|v| v.max(0.0)));
        let zeros = identity_params(2)
            .embed(&Matrix::zeros(2, 2), &Matrix::identity(2))
            .unwrap();
        assert_eq!(zeros, Matrix::zeros(2, 2));
    }

    #[test]
    fn encoder_matches_hand_chain_on_path() {
        let adj = Matrix::filled(2, 2, 0.5);
        let x = m(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let p = ModelParams {
            enc_w1: m(&[&[1.0, -1.0], &[0.5, 1.0]]),
            enc_w2: m(&[&[2.0], &[1.0]]),
            ..identity_params(2)
        };
        // Â·X = [[0.5, 1], [0.5, 1]]; ·W₁ = [[1, 0.5], ...]; relu keeps it;
        // Â·H = H; ·W₂ = 2 + 0.5 = 2.5 for each node.
        let z = p.embed(&x, &adj).unwrap();
        assert!(z.max_abs_diff(&m(&[&[2.5], &[2.5]])) < 1e-15);
    }

    #[test]
    fn fuse_examples() {
        let mut t = Tape::new();
        let a = t.constant(m(&[&[2.0, 0.0]]));
        let b = t.constant(m(&[&[0.0, 2.0]]));
        let f = fuse(&mut t, a, b).unwrap();
        assert_eq!(t.value(f), &m(&[&[1.0, 1.0]]));
        let g = fuse(&mut t, b, a).unwrap();
        assert_eq!(t.value(f), t.value(g));
        let s = fuse(&mut t, a, a).unwrap();
        assert_eq!(t.value(s), t.value(a));
    }

    #[test]
    fn readout_examples() {
        let mut t = Tape::new();
        let z = t.constant(m(&[&[1.0, 2.0], &[3.0, 6.0], &[5.0, 1.0]]));
        let one = t.constant(Matrix::ones(3, 1));
        let r = readout(&mut t, z, one).unwrap();
        assert!(t.value(r).max_abs_diff(&m(&[&[3.0], &[3.0]])) < 1e-15);

        let z2 = t.constant(Matrix::identity(2));
        let q2 = t.constant(Matrix::identity(2));
        let r = readout(&mut t, z2, q2).unwrap();
        assert_eq!(t.value(r), &Matrix::identity(2));

        let uniform = t.constant(Matrix::filled(3, 4, 0.25));
        let r = readout(&mut t, z, uniform).unwrap();
        // Global mean of the rows is (3, 3).
        let mean = [3.0, 3.0];
        for j in 0..4 {
            for (i, want) in mean.iter().enumerate() {
                assert!((t.value(r)[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn readout_rejects_empty_cluster() {
        let mut t = Tape::new();
        let z = t.constant(Matrix::ones(2, 2));
        let q = t.constant(m(&[&[1.0, 0.0], &[1.0, 0.0]]));
        assert!(matches!(
            readout(&mut t, z, q),
            Err(Error::EmptyCluster { column: 1, .. })
        ));
    }

    #[test]
    fn soft_assign_examples() {
        let q = soft_assignment(&m(&[&[0.0]]), &m(&[&[0.0], &[1.0]])).unwrap();
        assert!((q[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((q[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);

        let q = soft_assignment(&m(&[&[0.0, 0.0]]), &m(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]])).unwrap();
        for j in 0..3 {
            assert!((q[(0, j)] - 1.0 / 3.0).abs() < 1e-15);
        }

        let q = soft_assignment(&m(&[&[5.0, 5.0]]), &m(&[&[5.0, 5.0], &[500.0, 0.0]])).unwrap();
        assert!(q[(0, 0)] > 0.9999);
    }

    #[test]
    fn target_examples() {
        let onehot = m(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(target_dist(&onehot), onehot);
        let uniform = Matrix::filled(4, 3, 1.0 / 3.0);
        assert!(target_dist(&uniform).max_abs_diff(&uniform) < 1e-15);

        // f = (1.4, 0.6); row 0: (0.64/1.4, 0.04/0.6); row 1: (0.36/1.4, 0.16/0.6).
        let q = m(&[&[0.8, 0.2], &[0.6, 0.4]]);
        let p = target_dist(&q);
        let raw = [[0.64 / 1.4, 0.04 / 0.6], [0.36 / 1.4, 0.16 / 0.6]];
        for (i, r) in raw.iter().enumerate() {
            let s = r[0] + r[1];
            assert!((p[(i, 0)] - r[0] / s).abs() < 1e-15);
            assert!((p[(i, 1)] - r[1] / s).abs() < 1e-15);
        }
    }

    #[test]
    fn structure_decoder_examples() {
        let mut t = Tape::new();
        let z = t.constant(Matrix::zeros(3, 2));
        let a = decode_structure(&mut t, z).unwrap();
        assert_eq!(t.value(a), &Matrix::filled(3, 3, 0.5));

        let z = t.constant(Matrix::identity(2));
        let a = decode_structure(&mut t, z).unwrap();
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!(t.value(a).max_abs_diff(&m(&[&[s1, 0.5], &[0.5, s1]])) < 1e-15);
    }

    #[test]
    fn attribute_decoder_degenerate_cases() {
        let p = identity_params(2);
        let mut t = Tape::new();
        let vars = consts(&mut t, &p);
        let adj = t.constant(Matrix::identity(2));
        let z = t.constant(m(&[&[1.0, -1.0], &[-2.0, 0.5]]));
        let xh = decode_attributes(&mut t, z, adj, &vars).unwrap();
        assert_eq!(t.value(xh), &m(&[&[1.0, 0.0], &[0.0, 0.5]]));
        let zero = t.constant(Matrix::zeros(2, 2));
        let xh = decode_attributes(&mut t, zero, adj, &vars).unwrap();
        assert_eq!(t.value(xh), &Matrix::zeros(2, 2));
    }

    #[test]
    fn attribute_decoder_matches_plain_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = ModelConfig {
            input_dim: 2,
            hidden_dim: 4,
            latent_dim: 3,
            n_clusters: 2,
            readout_k: 2,
        };
        let p = ModelParams::init(&cfg, &mut rng).unwrap();
        let z = Matrix::from_fn(3, 3, |_| rng.random_range(-1.0..1.0));
        let adj = Matrix::from_fn(3, 3, |(i, j)| if i == j { 0.5 } else { 0.25 });
        let mut t = Tape::new();
        let vars = consts(&mut t, &p);
        let (zv, av) = (t.constant(z.clone()), t.constant(adj.clone()));
        let xh = decode_attributes(&mut t, zv, av, &vars).unwrap();

        let h = adj.dot(&z).unwrap().dot(&p.dec_w1).unwrap().map(|v| v.max(0.0));
        let want = adj.dot(&h).unwrap().dot(&p.dec_w2).unwrap();
        assert!(t.value(xh).max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = ModelConfig::new(16, 3);
        let p = ModelParams::init(&cfg, &mut rng).unwrap();
        assert_eq!(p.enc_w1.shape(), (16, 256));
        assert_eq!(p.centers.shape(), (3, 20));
        assert!(p.enc_w1.as_slice().iter().all(|v| v.abs() <= 0.25));
        assert!(p.enc_w2.as_slice().iter().all(|v| v.abs() <= 1.0 / 16.0));
    }

    #[test]
    fn named_round_trip() {
        let p = identity_params(2);
        let named = p
            .named()
            .into_iter()
            .map(|(n, m)| (n.to_string(), m.clone()))
            .collect();
        assert_eq!(ModelParams::from_named(named).unwrap(), p);
        assert!(ModelParams::from_named(vec![]).is_err());
    }
}
