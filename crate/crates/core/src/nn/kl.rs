//! KL divergence between a mean-field Gaussian posterior and the scale
//! mixture prior `(1 - pi) N(0, s1^2) + pi N(0, s2^2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;
use crate::nn::spec::{LayerSpec, NetworkSpec};
use crate::real::{sigmoid, softplus, Real};
use crate::rng::{self, Rng};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixturePrior {
    pub pi: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for MixturePrior {
    fn default() -> Self {
        Self {
            pi: 0.1,
            sigma1: 1.0,
            sigma2: 2.5,
        }
    }
}

fn log_normal(w: f64, sigma: f64) -> f64 {
    -0.5 * (w / sigma).powi(2) - sigma.ln() - LN_SQRT_2PI
}

impl MixturePrior {
    pub fn log_prob(&self, w: f64) -> f64 {
        let a = log_normal(w, self.sigma1);
        if self.pi == 0.0 {
            return a;
        }
        let b = log_normal(w, self.sigma2);
        if self.pi == 1.0 {
            return b;
        }
        let la = (1.0 - self.pi).ln() + a;
        let lb = self.pi.ln() + b;
        let m = la.max(lb);
        m + ((la - m).exp() + (lb - m).exp()).ln()
    }

    /// `d/dw log p(w)`.
    pub fn dlog_prob(&self, w: f64) -> f64 {
        let la = (1.0 - self.pi).ln() + log_normal(w, self.sigma1);
        let lb = if self.pi > 0.0 {
            self.pi.ln() + log_normal(w, self.sigma2)
        } else {
            f64::NEG_INFINITY
        };
        let m = la.max(lb);
        let (ra, rb) = ((la - m).exp(), (lb - m).exp());
        let resp_a = ra / (ra + rb);
        -(w / self.sigma1.powi(2)) * resp_a - (w / self.sigma2.powi(2)) * (1.0 - resp_a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi) || !(self.sigma1 > 0.0) || !(self.sigma2 > 0.0) {
            return Err(Error::config("mixture prior needs pi in [0,1] and positive scales"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    pub value: f64,
    /// Standard error of the Monte Carlo mean.
    pub std_error: f64,
}

/// Monte Carlo estimate of `KL(q || p)` with `q = N(mu, softplus(rho)^2)`,
/// summed over all weights and averaged over `samples` draws.
pub fn kl_mixture_mc(
    mu: &[f64],
    rho: &[f64],
    prior: &MixturePrior,
    rng: &mut Rng,
    samples: usize,
) -> Result<KlEstimate> {
    if samples == 0 {
        return Err(Error::config("KL estimate needs at least one sample"));
    }
    if mu.len() != rho.len() {
        return Err(Error::dim("mu and rho lengths differ"));
    }
    prior.validate()?;
    let sigma: Vec<f64> = rho.iter().map(|&r| softplus(r)).collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut total = 0.0;
        for (&m, &s) in mu.iter().zip(&sigma) {
            let e = rng::normal(rng);
            let w = m + s * e;
            let log_q = -0.5 * e * e - s.ln() - LN_SQRT_2PI;
            total += log_q - prior.log_prob(w);
        }
        sum += total;
        sum_sq += total * total;
    }
    let s = samples as f64;
    let mean = sum / s;
    let var = if samples > 1 {
        ((sum_sq - s * mean * mean) / (s - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(KlEstimate {
        value: mean,
        std_error: (var / s).sqrt(),
    })
}

/// Single-sample reparameterised KL over every flipout layer of `net`, with
/// its gradient. Only flipout tensors receive non-zero gradient entries.
pub fn kl_with_grad<F: Real>(
    net: &NetworkSpec,
    params: &ParamSet<F>,
    prior: &MixturePrior,
    rng: &mut Rng,
) -> (f64, ParamSet<F>) {
    let mut grads = params.zeros_like();
    let mut kl = 0.0;
    for (i, layer) in net.layers.iter().enumerate() {
        if !matches!(layer, LayerSpec::FlipoutDense { .. }) {
            continue;
        }
        let p = &params.layers[i].tensors;
        for (mu_idx, rho_idx) in [(0usize, 1usize), (2, 3)] {
            let mu = p[mu_idx].data();
            let rho = p[rho_idx].data();
            let mut dmu = vec![F::zero(); mu.len()];
            let mut drho = vec![F::zero(); mu.len()];
            for k in 0..mu.len() {
                let (m, r) = (mu[k].as_f64(), rho[k].as_f64());
                let s = softplus(r);
                let e = rng::normal(rng);
                let w = m + s * e;
                kl += -0.5 * e * e - s.ln() - LN_SQRT_2PI - prior.log_prob(w);
                let dlp = prior.dlog_prob(w);
                dmu[k] = F::lit(-dlp);
                drho[k] = F::lit((-1.0 / s - e * dlp) * sigmoid(r));
            }
            let g = &mut grads.layers[i].tensors;
            g[mu_idx].data_mut().copy_from_slice(&dmu);
            g[rho_idx].data_mut().copy_from_slice(&drho);
        }
    }
    (kl, grads)
}
