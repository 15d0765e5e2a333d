//! Distributions over predictions: Monte Carlo passes for stochastic
//! variants, member stacking for ensembles, and kernel certainty for DUQ.

use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::argmax;
use crate::nn::{checkpoint, forward, ForwardMode, NetworkSpec, ParamSet, Variant};
use crate::par::{map_indexed, Exec};
use crate::rng::{self, derive_seed, Rng};
use crate::tensor::Tensor;

/// Default number of stochastic forward passes.
pub const DEFAULT_PASSES: usize = 50;
/// Default ensemble size.
pub const DEFAULT_ENSEMBLE_SIZE: usize = 10;

/// Trials per forward call during inference.
const INFERENCE_CHUNK: usize = 256;

/// Class probabilities from `passes` forward passes, stored `[t][n][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSamples {
    passes: usize,
    trials: usize,
    classes: usize,
    probs: Vec<f64>,
    pub method: String,
}

impl PredictionSamples {
    pub fn new(passes: usize, trials: usize, classes: usize, probs: Vec<f64>, method: &str) -> Result<Self> {
        if passes == 0 || trials == 0 || classes == 0 {
            return Err(Error::config("prediction samples need T, N, K >= 1"));
        }
        if probs.len() != passes * trials * classes {
            return Err(Error::dim(format!(
                "{} probabilities for T={passes}, N={trials}, K={classes}",
                probs.len()
            )));
        }
        for (i, row) in probs.chunks_exact(classes).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::data(format!(
                    "row {i} is not a probability vector (sum {sum})"
                )));
            }
        }
        Ok(Self {
            passes,
            trials,
            classes,
            probs,
            method: method.to_owned(),
        })
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, pass: usize, trial: usize) -> &[f64] {
        let k = self.classes;
        &self.probs[(pass * self.trials + trial) * k..][..k]
    }

    pub fn mean_probs(&self, trial: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.classes];
        for t in 0..self.passes {
            for (a, &b) in m.iter_mut().zip(self.row(t, trial)) {
                *a += b;
            }
        }
        let t = self.passes as f64;
        m.iter_mut().for_each(|v| *v /= t);
        m
    }

    /// Stacks per-pass `[n][k]` matrices.
    pub fn from_passes(passes: Vec<Vec<f64>>, trials: usize, classes: usize, method: &str) -> Result<Self> {
        let t = passes.len();
        Self::new(t, trials, classes, passes.concat(), method)
    }
}

/// A single trained network and how it should be queried.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticModel {
    pub net: NetworkSpec,
    pub params: ParamSet<f32>,
    pub variant: Variant,
    /// Passes used when the caller does not override them.
    pub default_passes: usize,
}

impl StochasticModel {
    pub fn new(net: NetworkSpec, params: ParamSet<f32>, variant: Variant) -> Result<Self> {
        params.check(&net)?;
        let default_passes = if variant.samples_at_inference() {
            DEFAULT_PASSES
        } else {
            1
        };
        Ok(Self {
            net,
            params,
            variant,
            default_passes,
        })
    }

    fn mode(&self) -> ForwardMode {
        if self.variant.samples_at_inference() {
            ForwardMode::Stochastic
        } else {
            ForwardMode::Point
        }
    }
}

/// Runs `net` over `batch` in chunks and returns `[n][k]` outputs as `f64`.
fn run_chunks(
    net: &NetworkSpec,
    params: &ParamSet<f32>,
    batch: &Tensor<f32>,
    mode: ForwardMode,
    mut rng: Option<&mut Rng>,
) -> Result<Vec<f64>> {
    let n = batch.shape()[0];
    let mut out = Vec::with_capacity(n * net.classes);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(INFERENCE_CHUNK) {
        let xb = if chunk.len() == n { batch.clone() } else { batch.select_rows(chunk) };
        let (y, _) = forward(net, params, &xb, mode, rng.as_deref_mut())?;
        out.extend(y.data().iter().map(|&v| v as f64));
    }
    Ok(out)
}

/// `passes` independent forward passes. Pass `t` draws its noise from a
/// stream seeded with `derive_seed(base, t)`, where `base` is taken from
/// `rng`, so the result does not depend on `exec`.
pub fn mc_sample_predictions(
    model: &StochasticModel,
    batch: &Tensor<f32>,
    passes: usize,
    rng: &mut Rng,
    exec: Exec,
) -> Result<PredictionSamples> {
    if passes == 0 {
        return Err(Error::config("number of forward passes must be >= 1"));
    }
    if model.net.has_rbf_head() {
        return Err(Error::config("rbf models are queried with duq_predict"));
    }
    let base = rng.next_u64();
    let mode = model.mode();
    let results = map_indexed(exec, passes, |t| {
        let mut r = rng::seeded(derive_seed(base, t as u64));
        run_chunks(&model.net, &model.params, batch, mode, Some(&mut r))
    });
    let passes: Vec<Vec<f64>> = results.into_iter().collect::<Result<_>>()?;
    PredictionSamples::from_passes(passes, batch.shape()[0], model.net.classes, model.variant.name())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub net: NetworkSpec,
    pub members: Vec<ParamSet<f32>>,
    pub seeds: Vec<u64>,
}

impl Ensemble {
    pub fn new(net: NetworkSpec, members: Vec<ParamSet<f32>>, seeds: Vec<u64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::config("ensemble has no members"));
        }
        if seeds.len() != members.len() {
            return Err(Error::config("one seed per ensemble member required"));
        }
        for m in &members {
            m.check(&net)?;
        }
        Ok(Self { net, members, seeds })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// One slice per member, each a point-mode forward.
pub fn ensemble_predictions(ens: &Ensemble, batch: &Tensor<f32>, exec: Exec) -> Result<PredictionSamples> {
    if ens.members.is_empty() {
        return Err(Error::config("ensemble has no members"));
    }
    let results = map_indexed(exec, ens.members.len(), |m| {
        run_chunks(&ens.net, &ens.members[m], batch, ForwardMode::Point, None)
    });
    let passes: Vec<Vec<f64>> = results.into_iter().collect::<Result<_>>()?;
    PredictionSamples::from_passes(passes, batch.shape()[0], ens.net.classes, "ensembles")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuqPrediction {
    pub predicted: Vec<usize>,
    /// `-max_c K_c`; higher means less certain.
    pub uncertainty: Vec<f64>,
    /// `[n, k]` kernel values.
    pub kernel: Tensor<f64>,
}

pub fn duq_predict(model: &StochasticModel, batch: &Tensor<f32>) -> Result<DuqPrediction> {
    if !model.net.has_rbf_head() {
        return Err(Error::config("duq_predict needs a model with an rbf head"));
    }
    let k = model.net.classes;
    let kern = run_chunks(&model.net, &model.params, batch, ForwardMode::Point, None)?;
    let mut predicted = Vec::with_capacity(kern.len() / k);
    let mut uncertainty = Vec::with_capacity(kern.len() / k);
    for row in kern.chunks_exact(k) {
        let c = argmax(row);
        predicted.push(c);
        uncertainty.push(-row[c]);
    }
    Ok(DuqPrediction {
        predicted,
        uncertainty,
        kernel: Tensor::new(vec![kern.len() / k, k], kern)?,
    })
}

/// Result of training one method.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Single(StochasticModel),
    Ensemble(Ensemble),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub member_count: usize,
    pub seeds: Vec<u64>,
    pub variant: Variant,
    pub files: Vec<String>,
    pub network: NetworkSpec,
}

/// Writes `member_XX.uqnn` files plus `manifest.json` into `dir`.
pub fn save_ensemble(dir: &Path, ens: &Ensemble) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(ens.len());
    for (i, m) in ens.members.iter().enumerate() {
        let name = format!("member_{i:02}.uqnn");
        checkpoint::save(&dir.join(&name), &ens.net, m)?;
        files.push(name);
    }
    let manifest = EnsembleManifest {
        member_count: ens.len(),
        seeds: ens.seeds.clone(),
        variant: Variant::EnsembleMember,
        files,
        network: ens.net.clone(),
    };
    crate::fsutil::write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

pub fn load_ensemble(dir: &Path) -> Result<Ensemble> {
    let manifest: EnsembleManifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
    if manifest.files.len() != manifest.member_count || manifest.seeds.len() != manifest.member_count {
        return Err(Error::State("ensemble manifest counts disagree".into()));
    }
    let members = manifest
        .files
        .iter()
        .map(|f| checkpoint::load(&dir.join(f), &manifest.network))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(manifest.network, members, manifest.seeds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelManifest {
    variant: Variant,
    default_passes: usize,
    file: String,
    network: NetworkSpec,
}

/// Writes a trained model into `dir`: `model.uqnn` plus `model.json` for a
/// single network, or the ensemble layout of [`save_ensemble`].
pub fn save_model(dir: &Path, model: &TrainedModel) -> Result<()> {
    match model {
        TrainedModel::Ensemble(e) => save_ensemble(dir, e),
        TrainedModel::Single(m) => {
            std::fs::create_dir_all(dir)?;
            checkpoint::save(&dir.join("model.uqnn"), &m.net, &m.params)?;
            let manifest = ModelManifest {
                variant: m.variant,
                default_passes: m.default_passes,
                file: "model.uqnn".into(),
                network: m.net.clone(),
            };
            crate::fsutil::write_atomic(&dir.join("model.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
        }
    }
}

pub fn load_model(dir: &Path) -> Result<TrainedModel> {
    let single = dir.join("model.json");
    if !single.exists() {
        return load_ensemble(dir).map(TrainedModel::Ensemble);
    }
    let manifest: ModelManifest = serde_json::from_slice(&std::fs::read(single)?)?;
    let params = checkpoint::load(&dir.join(&manifest.file), &manifest.network)?;
    let mut model = StochasticModel::new(manifest.network, params, manifest.variant)?;
    model.default_passes = manifest.default_passes;
    Ok(TrainedModel::Single(model))
}
