use ndarray::Zip;

use super::model::{ModelParams, Param, Tensors};
use super::{lit, Real};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Optimizer moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Tensors<F>,
    pub v: Tensors<F>,
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        Self {
            m: params.tensors.zeros_like(),
            v: params.tensors.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Weight decay is coupled L2 (`decay * w` added to the gradient)
/// and applies to weight matrices only.
pub fn adam_step<F: Real>(
    params: &mut ModelParams<F>,
    grads: &Tensors<F>,
    state: &mut AdamState<F>,
    learning_rate: f64,
    weight_decay: f64,
) {
    state.step += 1;
    let b1 = lit::<F>(BETA1);
    let b2 = lit::<F>(BETA2);
    let c1 = lit::<F>(1.0 - BETA1.powi(state.step as i32));
    let c2 = lit::<F>(1.0 - BETA2.powi(state.step as i32));
    let lr = lit::<F>(learning_rate);
    let eps = lit::<F>(EPS);
    let one = F::one();
    for p in Param::ALL {
        let decay = if p.is_weight() {
            lit::<F>(weight_decay)
        } else {
            F::zero()
        };
        Zip::from(params.tensors.view_mut(p))
            .and(grads.view(p))
            .and(state.m.view_mut(p))
            .and(state.v.view_mut(p))
            .for_each(|w, &g, m, v| {
                let g = g + decay * *w;
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    params.touch();
}
