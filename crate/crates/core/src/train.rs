//! Mini-batch training with early stopping, and the per-method dispatcher.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::EpochSet;
use crate::error::{Error, Result};
use crate::eval::Split;
use crate::inference::{Ensemble, StochasticModel, TrainedModel, DEFAULT_ENSEMBLE_SIZE, DEFAULT_PASSES};
use crate::nn::kl::kl_with_grad;
use crate::nn::{
    adam_step, apply_running_stats, backward, build_variant, forward, loss, one_hot, AdamConfig,
    AdamState, ArchConfig, ForwardMode, MixturePrior, NetworkSpec, ParamSet, Variant,
};
use crate::par::{map_indexed, Exec};
use crate::real::Real;
use crate::rng::{self, derive_tagged};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    /// Prior for the flipout KL term.
    pub prior: MixturePrior,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            adam: AdamConfig::default(),
            prior: MixturePrior::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::config("batch size and max epochs must be >= 1"));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::config("learning rate must be > 0"));
        }
        self.prior.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub ensemble_size: usize,
    pub mc_passes: usize,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            ensemble_size: DEFAULT_ENSEMBLE_SIZE,
            mc_passes: DEFAULT_PASSES,
        }
    }
}

/// The seven evaluated methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dropout,
    McDropout,
    Dropconnect,
    McDropconnect,
    Flipout,
    Ensembles,
    Duq,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Dropout,
        Method::McDropout,
        Method::Dropconnect,
        Method::McDropconnect,
        Method::Flipout,
        Method::Ensembles,
        Method::Duq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dropout => "dropout",
            Method::McDropout => "mc_dropout",
            Method::Dropconnect => "dropconnect",
            Method::McDropconnect => "mc_dropconnect",
            Method::Flipout => "flipout",
            Method::Ensembles => "ensembles",
            Method::Duq => "duq",
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            Method::Dropout => Variant::Dropout,
            Method::McDropout => Variant::McDropout,
            Method::Dropconnect => Variant::Dropconnect,
            Method::McDropconnect => Variant::McDropconnect,
            Method::Flipout => Variant::Flipout,
            Method::Ensembles => Variant::EnsembleMember,
            Method::Duq => Variant::Duq,
        }
    }

    /// Single deterministic forward at test time.
    pub fn is_standard(self) -> bool {
        matches!(self, Method::Dropout | Method::Dropconnect)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub seed: u64,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
}

fn targets<F: Real>(set: &EpochSet, idx: &[usize]) -> Tensor<F> {
    let labels: Vec<usize> = idx.iter().map(|&i| set.labels[i] as usize).collect();
    one_hot(&labels, set.classes)
}

/// Mean point-mode loss over a whole set.
pub fn evaluate_loss(net: &NetworkSpec, params: &ParamSet<f32>, set: &EpochSet) -> Result<f64> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(256) {
        let xb = set.data.select_rows(chunk);
        let (out, _) = forward(net, params, &xb, ForwardMode::Point, None)?;
        let l = loss(net, &out, &targets::<f32>(set, chunk))?;
        total += l as f64 * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

/// Trains one network with Adam, keeping the parameters with the lowest
/// validation loss.
pub fn train_network(
    net: &NetworkSpec,
    train: &EpochSet,
    validation: &EpochSet,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ParamSet<f32>, TrainRecord)> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::data("training and validation sets must be non-empty"));
    }
    let mut init_rng = rng::seeded(derive_tagged(seed, "init", 0));
    let mut params = ParamSet::<f32>::init(net, &mut init_rng)?;
    let mut adam = AdamState::new(&params, cfg.adam);
    let mut shuffle_rng = rng::seeded(derive_tagged(seed, "shuffle", 0));
    let mut noise_rng = rng::seeded(derive_tagged(seed, "noise", 0));
    let kl_weight = 1.0 / train.len() as f32;
    let flipout = net.has_flipout();

    let mut best_loss = f64::INFINITY;
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        rng::shuffle(&mut order, &mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = train.data.select_rows(chunk);
            let yb = targets::<f32>(train, chunk);
            let (_, cache) = forward(net, &params, &xb, ForwardMode::Train, Some(&mut noise_rng))?;
            let mut grads = backward(net, &params, &cache, &yb)?;
            if flipout {
                let (_, kl_grads) = kl_with_grad(net, &params, &cfg.prior, &mut noise_rng);
                for (g, k) in grads.layers.iter_mut().zip(&kl_grads.layers) {
                    for (gt, kt) in g.tensors.iter_mut().zip(&k.tensors) {
                        for (a, &b) in gt.data_mut().iter_mut().zip(kt.data()) {
                            *a += kl_weight * b;
                        }
                    }
                }
            }
            adam_step(&mut params, &grads, &mut adam)?;
            apply_running_stats(&mut params, &cache);
        }
        let val = evaluate_loss(net, &params, validation)?;
        log::trace!("epoch {epoch}: validation loss {val:.5}");
        if val < best_loss {
            best_loss = val;
            best_params = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((
        best_params,
        TrainRecord {
            seed,
            best_epoch,
            epochs_run,
            best_val_loss: best_loss,
        },
    ))
}

/// Trains `method` on `split.train`, early-stopping on `split.validation`.
/// Ensemble members train on independent seeds (and therefore independent
/// initialisations and shuffles) derived from `seed`.
pub fn train_method(
    method: Method,
    split: &Split,
    cfg: &MethodConfig,
    seed: u64,
    exec: Exec,
) -> Result<(TrainedModel, Vec<TrainRecord>)> {
    let (train, val) = (&split.train, &split.validation);
    if train.is_empty() || val.is_empty() {
        return Err(Error::data("empty training or validation split"));
    }
    let net = build_variant(method.variant(), train.channels(), train.timesteps(), train.classes, &cfg.arch)?;
    match method {
        Method::Ensembles => {
            if cfg.ensemble_size < 2 {
                return Err(Error::config("an ensemble needs at least two members"));
            }
            let seeds: Vec<u64> = (0..cfg.ensemble_size)
                .map(|i| derive_tagged(seed, "member", i as u64))
                .collect();
            let results = map_indexed(exec, seeds.len(), |i| train_network(&net, train, val, &cfg.train, seeds[i]));
            let (members, records): (Vec<_>, Vec<_>) =
                results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
            Ok((TrainedModel::Ensemble(Ensemble::new(net, members, seeds)?), records))
        }
        _ => {
            let (params, record) = train_network(&net, train, val, &cfg.train, seed)?;
            let mut model = StochasticModel::new(net, params, method.variant())?;
            if method.variant().samples_at_inference() {
                model.default_passes = cfg.mc_passes;
            }
            Ok((TrainedModel::Single(model), vec![record]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("unknown".parse::<Method>(), Err(Error::Config(_))));
    }
}
