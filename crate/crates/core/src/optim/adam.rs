use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::ModelParams;

/// Adam moments for every parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Matrix> = params
            .matrices()
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
///
/// `grads` follows [`ModelParams::NAMES`] order. Nothing is modified when a
/// gradient is non-finite.
pub fn adam_step(params: &mut ModelParams, grads: &[Matrix], s: &mut AdamState) -> Result<()> {
    if grads.len() != ModelParams::NAMES.len() {
        return Err(Error::Contract(format!(
            "expected {} gradients, got {}",
            ModelParams::NAMES.len(),
            grads.len()
        )));
    }
    for ((name, p), g) in ModelParams::NAMES.iter().zip(params.matrices()).zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        if !g.is_finite() {
            return Err(Error::Divergence {
                phase: "adam_step",
                epoch: s.step_count as usize + 1,
                detail: format!("non-finite gradient for {name}"),
            });
        }
    }

    s.step_count += 1;
    let t = s.step_count as i32;
    let bias1 = 1.0 - s.beta1.powi(t);
    let bias2 = 1.0 - s.beta2.powi(t);
    let (b1, b2, lr, eps) = (s.beta1, s.beta2, s.lr, s.epsilon);
    for (((p, g), m), v) in params
        .matrices_mut()
        .into_iter()
        .zip(grads)
        .zip(&mut s.first_moment)
        .zip(&mut s.second_moment)
    {
        let p = p.as_mut_slice();
        let m = m.as_mut_slice();
        let v = v.as_mut_slice();
        for (k, &gk) in g.as_slice().iter().enumerate() {
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
