use crate::error::Result;
use crate::nn::network::{backward, forward, loss, ForwardMode};
use crate::nn::params::{is_trainable, ParamSet};
use crate::nn::spec::NetworkSpec;
use crate::rng;
use crate::tensor::Tensor;

const DENOM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

fn loss_at(
    net: &NetworkSpec,
    params: &ParamSet<f64>,
    batch: &Tensor<f64>,
    labels: &Tensor<f64>,
    seed: u64,
) -> Result<f64> {
    let mut r = rng::seeded(seed);
    let (out, _) = forward(net, params, batch, ForwardMode::Train, Some(&mut r))?;
    loss(net, &out, labels)
}

/// Compares analytic gradients with central differences of step `eps`.
///
/// Every forward pass (analytic and numeric) draws its noise from a fresh
/// stream seeded with `seed`, so dropout masks, dropconnect masks and flipout
/// perturbations are identical across all evaluations.
pub fn check_gradients(
    net: &NetworkSpec,
    params: &ParamSet<f64>,
    batch: &Tensor<f64>,
    labels: &Tensor<f64>,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut r = rng::seeded(seed);
    let (_, cache) = forward(net, params, batch, ForwardMode::Train, Some(&mut r))?;
    let grads = backward(net, params, &cache, labels)?;

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (li, layer) in net.layers.iter().enumerate() {
        for ti in 0..params.layers[li].tensors.len() {
            if !is_trainable(layer, ti) {
                continue;
            }
            for k in 0..params.layers[li].tensors[ti].len() {
                let orig = params.layers[li].tensors[ti].data()[k];
                work.layers[li].tensors[ti].data_mut()[k] = orig + eps;
                let up = loss_at(net, &work, batch, labels, seed)?;
                work.layers[li].tensors[ti].data_mut()[k] = orig - eps;
                let down = loss_at(net, &work, batch, labels, seed)?;
                work.layers[li].tensors[ti].data_mut()[k] = orig;

                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads.layers[li].tensors[ti].data()[k];
                let err = rel_error(analytic, numeric);
                report.checked += 1;
                if err > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = report.max_rel_error.max(err);
                    let name = crate::nn::params::param_names(layer)[ti];
                    report.worst = Some((format!("{li}.{name}"), k));
                }
            }
        }
    }
    Ok(report)
}
