use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StandardizeConfig {
    pub factor_new: f64,
    pub eps: f64,
    pub init_block: usize,
}

impl Default for StandardizeConfig {
    fn default() -> Self {
        Self {
            factor_new: 1e-3,
            eps: 1e-4,
            init_block: 1000,
        }
    }
}

impl StandardizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor_new > 0.0 && self.factor_new < 1.0) || !(self.eps > 0.0) {
            return Err(Error::config("standardization needs factor_new in (0,1) and eps > 0"));
        }
        Ok(())
    }
}

/// Exponential moving standardization of one channel.
///
/// `m_t = f x_t + (1 - f) m_{t-1}`, `v_t = f (x_t - m_t)^2 + (1 - f) v_{t-1}`
/// with `m` starting at `x_0` and `v` at 0; the output is
/// `(x_t - m_t) / max(sqrt(v_t), eps)`. The first `init_block` samples are
/// instead standardized with that block's own mean and standard deviation.
pub fn exponential_moving_standardize(signal: &[f64], cfg: &StandardizeConfig) -> Vec<f64> {
    let f = cfg.factor_new;
    let mut out = Vec::with_capacity(signal.len());
    let Some(&first) = signal.first() else {
        return out;
    };
    let mut mean = first;
    let mut var = 0.0;
    for &x in signal {
        mean = f * x + (1.0 - f) * mean;
        let d = x - mean;
        var = f * d * d + (1.0 - f) * var;
        out.push(d / var.sqrt().max(cfg.eps));
    }
    let block = cfg.init_block.min(signal.len());
    if block > 0 {
        let head = &signal[..block];
        let m = head.iter().sum::<f64>() / block as f64;
        let sd = (head.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / block as f64).sqrt();
        for (o, &x) in out.iter_mut().zip(head) {
            *o = (x - m) / sd.max(cfg.eps);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_signal_is_zero() {
        let cfg = StandardizeConfig {
            init_block: 10,
            ..Default::default()
        };
        let y = exponential_moving_standardize(&vec![3.7; 500], &cfg);
        assert!(y.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn eps_floor_bounds_output() {
        let cfg = StandardizeConfig {
            init_block: 0,
            eps: 1e-4,
            ..Default::default()
        };
        let x: Vec<f64> = (0..200).map(|i| 1.0 + 1e-9 * (i % 2) as f64).collect();
        let y = exponential_moving_standardize(&x, &cfg);
        // |x - m| <= 1e-9, divided by at least 1e-4
        assert!(y.iter().all(|&v| v.abs() <= 1e-5));
    }

    #[test]
    fn causal_after_init_block() {
        let cfg = StandardizeConfig {
            init_block: 20,
            ..Default::default()
        };
        let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.3).sin() * 5.0 + i as f64 * 0.01).collect();
        let full = exponential_moving_standardize(&x, &cfg);
        let part = exponential_moving_standardize(&x[..150], &cfg);
        assert_eq!(&full[20..150], &part[20..150]);
    }
}
