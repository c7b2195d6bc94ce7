//! Finite-difference verification of every loss and of the full objective.
//!
//! Each instance is a small random graph. Losses are checked against central
//! differences with respect to the matrices they are differentiated by during
//! training: view embeddings for the correlation terms, the fused embedding
//! for propagation regularization, the autoencoder weights for
//! reconstruction, embedding and centers for KL, and all model parameters for
//! the total. The KL target is frozen at the unperturbed point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{self, DistortionConfig, Graph};
use crate::linalg::{grad_check, Matrix, Tape, Var};
use crate::losses::{self, Gates, LossWeights};
use crate::model::{self, ModelConfig, ModelParams, ParamVars};
use crate::optim::{objective, ObjectiveInputs};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Minimum distance of any ReLU input from zero in a checked instance.
const KINK_MARGIN: f64 = 1e-3;
/// Minimum row norm of any cosine input in a checked instance.
const ROW_MARGIN: f64 = 1e-2;

/// Names of the checked quantities, in report order.
pub const LOSSES: [&str; 6] = ["l_n", "l_f", "l_r", "l_rec", "l_kl", "total"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCheck {
    pub loss: &'static str,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub graphs: usize,
    pub checks: Vec<LossCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LossCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_| rng.random_range(-1.0..1.0))
}

/// Model parameters with every entry drawn from [-1, 1].
fn uniform_params(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<ModelParams> {
    let mut p = ModelParams::init(cfg, rng)?;
    for m in p.matrices_mut() {
        *m = uniform(rng, m.rows(), m.cols());
    }
    Ok(p)
}

/// Distance of the nearest ReLU input from its kink, and the smallest row
/// norm among the matrices the correlation losses normalize.
fn margins(params: &ModelParams, inputs: &ObjectiveInputs) -> Result<(f64, f64)> {
    let min_abs = |m: &Matrix| m.as_slice().iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let min_row = |m: &Matrix| {
        (0..m.rows())
            .map(|i| m.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let mut kink = f64::INFINITY;
    let mut pre = |adj: &Matrix, x: &Matrix, w: &Matrix| -> Result<()> {
        kink = kink.min(min_abs(&adj.dot(x)?.dot(w)?));
        Ok(())
    };

    let mut t = Tape::new();
    let pv = params.register(&mut t);
    let x = t.constant(inputs.features.clone());
    let clean = t.constant(inputs.attributes.clone());
    let sym = t.constant(inputs.sym_adjacency.clone());
    let masked = t.constant(inputs.masked_adjacency.clone());
    let diffused = t.constant(inputs.diffusion.clone());
    let z1 = model::encode(&mut t, x, masked, &pv)?;
    let z2 = model::encode(&mut t, x, diffused, &pv)?;
    let z = model::fuse(&mut t, z1, z2)?;
    let z_rec = model::encode(&mut t, clean, sym, &pv)?;
    let q = model::soft_assign(&mut t, z, pv.centers)?;
    let zt1 = model::readout(&mut t, z1, q)?;
    let zt2 = model::readout(&mut t, z2, q)?;

    pre(&inputs.masked_adjacency, &inputs.features, &params.enc_w1)?;
    pre(&inputs.diffusion, &inputs.features, &params.enc_w1)?;
    pre(&inputs.sym_adjacency, &inputs.attributes, &params.enc_w1)?;
    pre(&inputs.sym_adjacency, t.value(z), &params.dec_w1)?;
    pre(&inputs.sym_adjacency, t.value(z_rec), &params.dec_w1)?;
    let row = [z1, z2, zt1, zt2].iter().map(|&v| min_row(t.value(v))).fold(f64::INFINITY, f64::min);
    Ok((kink, row))
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Result<Graph> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.5) {
                edges.push((u, v));
            }
        }
    }
    // A spanning path keeps the masking step from running out of edges.
    if edges.is_empty() {
        edges.extend((1..n).map(|v| (v - 1, v)));
    }
    Graph::new(n, edges, uniform(rng, n, dim), None)
}

fn vars4(vars: &[Var], centers: Var) -> ParamVars {
    ParamVars {
        enc_w1: vars[0],
        enc_w2: vars[1],
        dec_w1: vars[2],
        dec_w2: vars[3],
        centers,
    }
}

fn params_vars(vars: &[Var]) -> ParamVars {
    vars4(vars, vars[4])
}

// Worst error of each loss on one random instance.
fn check_instance(rng: &mut ChaCha8Rng) -> Result<[f64; 6]> {
    let n = rng.random_range(4..=8);
    let d = rng.random_range(2..=5);
    let dim = rng.random_range(2..=5);
    let hidden = rng.random_range(3..=6);
    let c = rng.random_range(2..=3);
    let k = rng.random_range(2..=4);

    let g = random_graph(rng, n, dim)?;
    let sym = g.normalized_adjacency();
    let rw = g.normalize_rw();
    let x = g.attributes().clone();

    let l_n = grad_check(
        |t, v| losses::loss_scr(t, v[0], v[1]),
        &[uniform(rng, n, d), uniform(rng, n, d)],
        STEP,
    )?;

    let l_f = grad_check(
        |t, v| losses::loss_fcr(t, v[0], v[1]),
        &[uniform(rng, d, k), uniform(rng, d, k)],
        STEP,
    )?;

    let l_r = grad_check(
        |t, v| {
            let a = t.constant(rw.clone());
            losses::loss_preg(t, v[0], a)
        },
        &[uniform(rng, n, d)],
        STEP,
    )?;

    let z = uniform(rng, n, d);
    let mu = uniform(rng, c, d);
    let p = model::target_dist(&model::soft_assignment(&z, &mu)?);
    let l_kl = grad_check(
        |t, v| {
            let q = model::soft_assign(t, v[0], v[1])?;
            losses::loss_kl(t, &p, q)
        },
        &[z, mu],
        STEP,
    )?;

    let distortion = DistortionConfig::default();
    // Any latent works for picking masked edges; tiny encoders can emit zero rows.
    let latent = uniform(rng, n, d);
    let inputs = ObjectiveInputs {
        attributes: x.clone(),
        features: graph::corrupt_features(&x, &distortion, rng),
        masked_adjacency: graph::mask_edges(&g, &latent, &distortion)?,
        diffusion: graph::ppr_diffusion(&g, &distortion)?,
        sym_adjacency: sym.clone(),
        rw_adjacency: rw.clone(),
        readout_anchors: None,
    };

    let cfg = ModelConfig {
        input_dim: dim,
        hidden_dim: hidden,
        latent_dim: d,
        n_clusters: c,
        readout_k: c,
    };
    // Redraw until the instance is smooth at the scale of the step: no ReLU
    // input within reach of its kink, and no row entering a cosine close to
    // zero, where curvature grows like 1/|r|^3.
    let mut params = None;
    for _ in 0..100 {
        let candidate = uniform_params(&cfg, rng)?;
        match margins(&candidate, &inputs) {
            Ok((kink, row)) if kink >= KINK_MARGIN && row >= ROW_MARGIN => {
                params = Some(candidate);
                break;
            }
            Ok(_) | Err(Error::DegenerateRow { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let params = params.ok_or_else(|| Error::Numeric("no well-conditioned gradient-check instance".into()))?;

    let weights: Vec<Matrix> = params.matrices()[..4].iter().map(|&m| m.clone()).collect();
    let l_rec = grad_check(
        |t, v| {
            let centers = t.constant(params.centers.clone());
            let pv = vars4(v, centers);
            let xv = t.constant(x.clone());
            let av = t.constant(sym.clone());
            let rv = t.constant(rw.clone());
            let z = model::encode(t, xv, av, &pv)?;
            let x_hat = model::decode_attributes(t, z, av, &pv)?;
            let a_hat = model::decode_structure(t, z)?;
            losses::loss_rec(t, xv, x_hat, rv, a_hat)
        },
        &weights,
        STEP,
    )?;

    let w = LossWeights::default();
    let target = {
        let mut t = Tape::new();
        let pv = params.register(&mut t);
        objective(&mut t, &pv, &inputs, None, &w, Gates::ALL)?.target
    };
    let all: Vec<Matrix> = params.matrices().iter().map(|&m| m.clone()).collect();
    let total = grad_check(
        |t, v| Ok(objective(t, &params_vars(v), &inputs, Some(&target), &w, Gates::ALL)?.total),
        &all,
        STEP,
    )?;

    Ok([l_n, l_f, l_r, l_rec, l_kl, total])
}

/// Checks every loss on `graphs` random instances drawn from `seed`.
pub fn run_suite(seed: u64, graphs: usize) -> Result<GradCheckReport> {
    let mut worst = [0.0f64; 6];
    for i in 0..graphs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let errs = check_instance(&mut rng)?;
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    let checks = LOSSES
        .iter()
        .zip(worst)
        .map(|(&loss, max_rel_error)| LossCheck {
            loss,
            max_rel_error,
            passed: max_rel_error <= TOLERANCE,
        })
        .collect();
    Ok(GradCheckReport {
        seed,
        graphs,
        checks,
    })
}
