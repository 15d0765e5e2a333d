use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub m: ParamSet<F>,
    pub v: ParamSet<F>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &ParamSet<F>, config: AdamConfig) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<F: Real>(
    params: &mut ParamSet<F>,
    grads: &ParamSet<F>,
    state: &mut AdamState<F>,
) -> Result<()> {
    let shapes_match = |a: &ParamSet<F>, b: &ParamSet<F>| {
        a.layers.len() == b.layers.len()
            && a.layers.iter().zip(&b.layers).all(|(x, y)| {
                x.tensors.len() == y.tensors.len()
                    && x.tensors.iter().zip(&y.tensors).all(|(p, q)| p.shape() == q.shape())
            })
    };
    if !shapes_match(params, grads) || !shapes_match(params, &state.m) {
        return Err(Error::dim("adam: parameter, gradient and state shapes differ"));
    }

    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let b1 = F::lit(c.beta1);
    let b2 = F::lit(c.beta2);
    let bc1 = F::lit(1.0 - c.beta1.powi(t));
    let bc2 = F::lit(1.0 - c.beta2.powi(t));
    let lr = F::lit(c.lr);
    let eps = F::lit(c.eps);

    for (li, layer) in params.layers.iter_mut().enumerate() {
        for (ti, p) in layer.tensors.iter_mut().enumerate() {
            let g = grads.layers[li].tensors[ti].data();
            let m = state.m.layers[li].tensors[ti].data_mut();
            let v = state.v.layers[li].tensors[ti].data_mut();
            for (k, pv) in p.data_mut().iter_mut().enumerate() {
                let gk = g[k];
                m[k] = b1 * m[k] + (F::one() - b1) * gk;
                v[k] = b2 * v[k] + (F::one() - b2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
    Ok(())
}
