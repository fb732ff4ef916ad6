//! Momentum-SGD (base model) and Adam (policy).
//!
//! The slice-level update rules live here in one place; both the model-level
//! [`OptimizerState`] and the policy network's internal Adam drive them.

use crate::error::{Error, Result};
use crate::nn::{GradientSet, MlpModel};

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Heavy-ball momentum: `v <- mu*v - lr*g`, `w <- w + v`.
pub fn momentum_update(params: &mut [f64], velocity: &mut [f64], grads: &[f64], mu: f64, lr: f64) {
    debug_assert_eq!(params.len(), velocity.len());
    debug_assert_eq!(params.len(), grads.len());
    for ((w, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = mu * *v - lr * g;
        *w += *v;
    }
}

/// One bias-corrected Adam update for a parameter slice. `step` is the
/// 1-based count of updates applied so far, including this one.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    grads: &[f64],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    debug_assert_eq!(params.len(), m.len());
    debug_assert_eq!(params.len(), v.len());
    debug_assert_eq!(params.len(), grads.len());
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for (((w, mi), vi), &g) in params.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(grads) {
        *mi = beta1 * *mi + (1.0 - beta1) * g;
        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    MomentumSgd {
        learning_rate: f64,
        momentum: f64,
        /// One velocity buffer per parameter tensor, in model order
        /// (weights then biases per layer).
        velocity: Vec<Vec<f64>>,
    },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: u64,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    },
}

fn tensor_sizes(model: &MlpModel) -> Vec<usize> {
    model
        .layers()
        .iter()
        .flat_map(|l| [l.weights.data().len(), l.biases.len()])
        .collect()
}

impl OptimizerState {
    pub fn momentum_sgd(model: &MlpModel, learning_rate: f64, momentum: f64) -> Self {
        let velocity = tensor_sizes(model).into_iter().map(|n| vec![0.0; n]).collect();
        OptimizerState::MomentumSgd {
            learning_rate,
            momentum,
            velocity,
        }
    }

    pub fn adam(model: &MlpModel, learning_rate: f64) -> Self {
        let m: Vec<Vec<f64>> = tensor_sizes(model).into_iter().map(|n| vec![0.0; n]).collect();
        let v = m.clone();
        OptimizerState::Adam {
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            m,
            v,
        }
    }

    /// Applies one update in place. Buffer shapes must mirror the model.
    pub fn step(&mut self, model: &mut MlpModel, grads: &GradientSet) -> Result<()> {
        if grads.layers.len() != model.layers().len() {
            return Err(Error::shape("gradient layer count != model layer count"));
        }
        for (l, g) in model.layers().iter().zip(&grads.layers) {
            if l.weights.rows() != g.weights.rows()
                || l.weights.cols() != g.weights.cols()
                || l.biases.len() != g.biases.len()
            {
                return Err(Error::shape("gradient shapes do not mirror the model"));
            }
        }

        match self {
            OptimizerState::MomentumSgd {
                learning_rate,
                momentum,
                velocity,
            } => {
                let mut bufs = velocity.iter_mut();
                for (layer, grad) in model.layers_mut().iter_mut().zip(&grads.layers) {
                    momentum_update(
                        layer.weights.data_mut(),
                        bufs.next().expect("buffer per tensor"),
                        grad.weights.data(),
                        *momentum,
                        *learning_rate,
                    );
                    momentum_update(
                        &mut layer.biases,
                        bufs.next().expect("buffer per tensor"),
                        &grad.biases,
                        *momentum,
                        *learning_rate,
                    );
                }
            }
            OptimizerState::Adam {
                learning_rate,
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
            } => {
                *step += 1;
                let mut ms = m.iter_mut();
                let mut vs = v.iter_mut();
                for (layer, grad) in model.layers_mut().iter_mut().zip(&grads.layers) {
                    adam_update(
                        layer.weights.data_mut(),
                        ms.next().expect("buffer per tensor"),
                        vs.next().expect("buffer per tensor"),
                        grad.weights.data(),
                        *step,
                        *learning_rate,
                        *beta1,
                        *beta2,
                        *eps,
                    );
                    adam_update(
                        &mut layer.biases,
                        ms.next().expect("buffer per tensor"),
                        vs.next().expect("buffer per tensor"),
                        &grad.biases,
                        *step,
                        *learning_rate,
                        *beta1,
                        *beta2,
                        *eps,
                    );
                }
            }
        }

        debug_assert!(
            model.layers().iter().all(|l| l.weights.is_finite()
                && l.biases.iter().all(|b| b.is_finite())),
            "optimizer produced non-finite parameters"
        );
        Ok(())
    }
}
