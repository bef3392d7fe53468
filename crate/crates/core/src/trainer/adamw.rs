//! AdamW with decoupled weight decay on the projection matrices.

use crate::linalg::Matrix;

use super::{Gradients, ProjectionPair, TrainConfig};

/// First and second moment estimates for every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    m_image: Vec<f64>,
    v_image: Vec<f64>,
    m_text: Vec<f64>,
    v_text: Vec<f64>,
    m_temp: f64,
    v_temp: f64,
}

impl AdamWState {
    pub fn new(pair: &ProjectionPair) -> Self {
        let ni = pair.image.as_slice().len();
        let nt = pair.text.as_slice().len();
        Self {
            m_image: vec![0.0; ni],
            v_image: vec![0.0; ni],
            m_text: vec![0.0; nt],
            v_text: vec![0.0; nt],
            m_temp: 0.0,
            v_temp: 0.0,
        }
    }
}

struct Hyper {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

impl Hyper {
    fn update(&self, theta: &mut f64, g: f64, m: &mut f64, v: &mut f64, decay: f64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let m_hat = *m / self.bc1;
        let v_hat = *v / self.bc2;
        *theta -= self.lr * decay * *theta;
        *theta -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }
}

fn update_matrix(h: &Hyper, theta: &mut Matrix, grad: &Matrix, m: &mut [f64], v: &mut [f64], decay: f64) {
    for (((t, &g), m), v) in theta
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        h.update(t, g, m, v, decay);
    }
}

/// One bias-corrected AdamW step at 1-based `step_index` with learning rate
/// `lr`. Weight decay applies to the matrices only; the log scale is
/// clamped to its allowed range afterwards.
pub fn adamw_step(
    pair: &mut ProjectionPair,
    grads: &Gradients,
    state: &mut AdamWState,
    config: &TrainConfig,
    step_index: u64,
    lr: f64,
) {
    assert!(step_index >= 1, "AdamW steps are 1-based");
    let t = step_index.min(i32::MAX as u64) as i32;
    let h = Hyper {
        lr,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.eps,
        bc1: 1.0 - config.beta1.powi(t),
        bc2: 1.0 - config.beta2.powi(t),
    };
    update_matrix(
        &h,
        &mut pair.image,
        &grads.image,
        &mut state.m_image,
        &mut state.v_image,
        config.weight_decay,
    );
    update_matrix(
        &h,
        &mut pair.text,
        &grads.text,
        &mut state.m_text,
        &mut state.v_text,
        config.weight_decay,
    );
    h.update(
        &mut pair.log_temperature,
        grads.log_temperature,
        &mut state.m_temp,
        &mut state.v_temp,
        0.0,
    );
    pair.clamp_log_temperature();
}
