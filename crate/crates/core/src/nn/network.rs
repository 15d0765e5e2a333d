use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{self, BnBatch, ConvDims, FlipoutNoise, PoolDims};
use crate::nn::params::ParamSet;
use crate::nn::spec::{Activation, LayerSpec, LossKind, NetworkSpec};
use crate::real::Real;
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

/// Probability floor applied before every logarithm in the losses.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMode {
    /// Sampling layers active, batchnorm on batch statistics.
    Train,
    /// No randomness, batchnorm on running statistics.
    Point,
    /// Sampling layers active, batchnorm on running statistics.
    Stochastic,
}

impl ForwardMode {
    fn samples(self) -> bool {
        !matches!(self, ForwardMode::Point)
    }
}

#[derive(Debug, Clone)]
enum Aux<F> {
    None,
    Mask(Vec<F>),
    BnBatch(BnBatch<F>),
    BnRunning,
    Flipout(Option<FlipoutNoise<F>>),
    Rbf(Vec<F>),
}

/// Intermediate values from one forward call, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    inputs: Vec<Tensor<F>>,
    aux: Vec<Aux<F>>,
    weight_masks: Vec<Option<Vec<F>>>,
    output: Tensor<F>,
    mode: ForwardMode,
    bn_updates: Vec<(usize, Vec<F>, Vec<F>)>,
}

impl<F: Real> ForwardCache<F> {
    pub fn output(&self) -> &Tensor<F> {
        &self.output
    }

    pub fn mode(&self) -> ForwardMode {
        self.mode
    }

    /// Input of the last layer, i.e. the logits for a softmax head or the
    /// feature vector for an rbf head.
    pub fn head_input(&self) -> &Tensor<F> {
        self.inputs.last().expect("network has layers")
    }
}

fn batch_shape(n: usize, per_sample: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(per_sample.len() + 1);
    s.push(n);
    s.extend_from_slice(per_sample);
    s
}

fn dropconnect_rate(net: &NetworkSpec, i: usize) -> Option<f64> {
    match net.layers.get(i + 1) {
        Some(LayerSpec::Dropconnect { rate }) => Some(*rate),
        _ => None,
    }
}

fn inverted_mask<F: Real>(len: usize, rate: f64, rng: &mut Rng) -> Vec<F> {
    let keep = F::lit(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng::uniform(rng) >= rate { keep } else { F::zero() })
        .collect()
}

/// Runs the network on `batch` (`[n, channels, timesteps]`).
///
/// `rng` may be `None` only in point mode or when the network has no
/// sampling layers.
pub fn forward<F: Real>(
    net: &NetworkSpec,
    params: &ParamSet<F>,
    batch: &Tensor<F>,
    mode: ForwardMode,
    mut rng: Option<&mut Rng>,
) -> Result<(Tensor<F>, ForwardCache<F>)> {
    let shapes = net.shapes()?;
    params.check(net)?;
    if batch.rank() != 3 || batch.shape()[1] != net.channels || batch.shape()[2] != net.timesteps {
        return Err(Error::dim(format!(
            "batch shape {:?} does not match network input [n, {}, {}]",
            batch.shape(),
            net.channels,
            net.timesteps
        )));
    }
    if mode.samples() && rng.is_none() && net.has_stochastic_layers() {
        return Err(Error::config("a random stream is required outside point mode"));
    }
    let n = batch.shape()[0];

    let mut x = batch.clone().reshape(&batch_shape(n, &shapes[0]))?;
    let mut inputs = Vec::with_capacity(net.layers.len());
    let mut aux = Vec::with_capacity(net.layers.len());
    let mut weight_masks = Vec::with_capacity(net.layers.len());
    let mut bn_updates = Vec::new();

    for (i, layer) in net.layers.iter().enumerate() {
        let ins = &shapes[i];
        let outs = &shapes[i + 1];
        let p = &params.layers[i].tensors;
        let xd = x.data();
        let mut wmask = None;
        let (y, a) = match *layer {
            LayerSpec::Conv2d { kernel, bias, .. } => {
                let d = ConvDims {
                    n,
                    cin: ins[0],
                    h: ins[1],
                    w: ins[2],
                    cout: outs[0],
                    kh: kernel.0,
                    kw: kernel.1,
                };
                let b = bias.then(|| p[1].data());
                let y = match (dropconnect_rate(net, i), rng.as_deref_mut()) {
                    (Some(rate), Some(r)) if mode.samples() => {
                        let m = inverted_mask::<F>(p[0].len(), rate, r);
                        let w: Vec<F> = p[0].data().iter().zip(&m).map(|(&a, &b)| a * b).collect();
                        wmask = Some(m);
                        layers::conv2d_forward(xd, &w, b, d)
                    }
                    _ => layers::conv2d_forward(xd, p[0].data(), b, d),
                };
                (y, Aux::None)
            }
            LayerSpec::Dense { units, activation } => {
                let inputs_n: usize = ins.iter().product();
                let mut y = match (dropconnect_rate(net, i), rng.as_deref_mut()) {
                    (Some(rate), Some(r)) if mode.samples() => {
                        let m = inverted_mask::<F>(p[0].len(), rate, r);
                        let w: Vec<F> = p[0].data().iter().zip(&m).map(|(&a, &b)| a * b).collect();
                        wmask = Some(m);
                        layers::dense_forward(xd, &w, p[1].data(), n, inputs_n)
                    }
                    _ => layers::dense_forward(xd, p[0].data(), p[1].data(), n, inputs_n),
                };
                debug_assert_eq!(y.len(), n * units);
                if activation == Activation::Relu {
                    layers::relu_inplace(&mut y);
                }
                (y, Aux::None)
            }
            LayerSpec::Batchnorm { eps, momentum } => {
                let spatial: usize = ins[1..].iter().product();
                let eps = F::lit(eps);
                if mode == ForwardMode::Train {
                    let (y, st) =
                        layers::batchnorm_train(xd, p[0].data(), p[1].data(), n, spatial, eps);
                    let count = (n * spatial) as f64;
                    let unbias = F::lit(if count > 1.0 { count / (count - 1.0) } else { 1.0 });
                    let mom = F::lit(momentum);
                    let keep = F::one() - mom;
                    let rm = p[2]
                        .data()
                        .iter()
                        .zip(&st.mean)
                        .map(|(&r, &m)| keep * r + mom * m)
                        .collect();
                    let rv = p[3]
                        .data()
                        .iter()
                        .zip(&st.var)
                        .map(|(&r, &v)| keep * r + mom * v * unbias)
                        .collect();
                    bn_updates.push((i, rm, rv));
                    (y, Aux::BnBatch(st))
                } else {
                    let (y, _) = layers::batchnorm_running(
                        xd,
                        p[0].data(),
                        p[1].data(),
                        p[2].data(),
                        p[3].data(),
                        spatial,
                        eps,
                    );
                    (y, Aux::BnRunning)
                }
            }
            LayerSpec::Square => (xd.iter().map(|&v| v * v).collect(), Aux::None),
            LayerSpec::Log { floor } => {
                let floor = F::lit(floor);
                (xd.iter().map(|&v| v.max(floor).ln()).collect(), Aux::None)
            }
            LayerSpec::Avgpool { size, stride } => {
                let d = PoolDims {
                    n,
                    c: ins[0],
                    h: ins[1],
                    w: ins[2],
                    ph: size.0,
                    pw: size.1,
                    sh: stride.0,
                    sw: stride.1,
                };
                (layers::avgpool_forward(xd, d), Aux::None)
            }
            LayerSpec::Dropout { rate } => match rng.as_deref_mut() {
                Some(r) if mode.samples() && rate > 0.0 => {
                    let m = inverted_mask::<F>(xd.len(), rate, r);
                    let y = xd.iter().zip(&m).map(|(&a, &b)| a * b).collect();
                    (y, Aux::Mask(m))
                }
                _ => (xd.to_vec(), Aux::None),
            },
            LayerSpec::Dropconnect { .. } => (xd.to_vec(), Aux::None),
            LayerSpec::FlipoutDense { units, activation } => {
                let inputs_n: usize = ins.iter().product();
                let noise = match rng.as_deref_mut() {
                    Some(r) if mode.samples() => Some(sample_flipout_noise(n, inputs_n, units, r)),
                    _ => None,
                };
                let mut y = layers::flipout_forward(
                    xd,
                    p[0].data(),
                    p[1].data(),
                    p[2].data(),
                    p[3].data(),
                    noise.as_ref(),
                    n,
                    inputs_n,
                );
                if activation == Activation::Relu {
                    layers::relu_inplace(&mut y);
                }
                (y, Aux::Flipout(noise))
            }
            LayerSpec::Rbf {
                centroid_dim,
                length_scale,
            } => {
                let features: usize = ins.iter().product();
                let (k, resid) = layers::rbf_forward(
                    xd,
                    p[0].data(),
                    p[1].data(),
                    n,
                    features,
                    net.classes,
                    centroid_dim,
                    F::lit(length_scale),
                );
                (k, Aux::Rbf(resid))
            }
            LayerSpec::Softmax => (layers::softmax_rows(xd, net.classes), Aux::None),
        };
        let y = Tensor::new(batch_shape(n, outs), y)?;
        if !y.is_finite() {
            return Err(Error::Numeric {
                index: i,
                kind: layer.kind(),
            });
        }
        inputs.push(std::mem::replace(&mut x, y));
        aux.push(a);
        weight_masks.push(wmask);
    }

    let cache = ForwardCache {
        inputs,
        aux,
        weight_masks,
        output: x.clone(),
        mode,
        bn_updates,
    };
    Ok((x, cache))
}

pub(crate) fn sample_flipout_noise<F: Real>(
    n: usize,
    inputs: usize,
    units: usize,
    rng: &mut Rng,
) -> FlipoutNoise<F> {
    FlipoutNoise {
        eps_w: (0..inputs * units).map(|_| F::lit(rng::normal(rng))).collect(),
        eps_b: (0..units).map(|_| F::lit(rng::normal(rng))).collect(),
        sign_in: (0..n * inputs).map(|_| F::lit(rng::sign(rng))).collect(),
        sign_out: (0..n * units).map(|_| F::lit(rng::sign(rng))).collect(),
    }
}

/// Writes the running batchnorm statistics gathered by a train-mode forward.
pub fn apply_running_stats<F: Real>(params: &mut ParamSet<F>, cache: &ForwardCache<F>) {
    for (i, rm, rv) in &cache.bn_updates {
        let t = &mut params.layers[*i].tensors;
        t[2].data_mut().copy_from_slice(rm);
        t[3].data_mut().copy_from_slice(rv);
    }
}

fn check_labels<F: Real>(net: &NetworkSpec, output: &Tensor<F>, labels: &Tensor<F>) -> Result<()> {
    if labels.shape() != output.shape() || labels.shape().get(1) != Some(&net.classes) {
        return Err(Error::dim(format!(
            "labels shape {:?} does not match outputs {:?}",
            labels.shape(),
            output.shape()
        )));
    }
    Ok(())
}

/// Batch-mean data loss of the configured kind.
pub fn loss<F: Real>(net: &NetworkSpec, output: &Tensor<F>, labels: &Tensor<F>) -> Result<F> {
    check_labels(net, output, labels)?;
    let n = F::lit(output.shape()[0] as f64);
    let floor = F::lit(PROB_FLOOR);
    let total: F = match net.loss {
        LossKind::CategoricalCe => output
            .data()
            .iter()
            .zip(labels.data())
            .map(|(&p, &y)| if y == F::zero() { F::zero() } else { -y * p.max(floor).ln() })
            .sum(),
        LossKind::BinaryCe => {
            let k = F::lit(net.classes as f64);
            output
                .data()
                .iter()
                .zip(labels.data())
                .map(|(&p, &y)| {
                    let pos = if y == F::zero() { F::zero() } else { y * p.max(floor).ln() };
                    let neg = if y == F::one() {
                        F::zero()
                    } else {
                        (F::one() - y) * (F::one() - p).max(floor).ln()
                    };
                    -(pos + neg)
                })
                .sum::<F>()
                / k
        }
    };
    Ok(total / n)
}

/// Gradient of the batch-mean loss with respect to every parameter. Entries
/// for non-trainable tensors (batchnorm running statistics) are zero.
pub fn backward<F: Real>(
    net: &NetworkSpec,
    params: &ParamSet<F>,
    cache: &ForwardCache<F>,
    labels: &Tensor<F>,
) -> Result<ParamSet<F>> {
    let shapes = net.shapes()?;
    params.check(net)?;
    if cache.inputs.len() != net.layers.len() || cache.aux.len() != net.layers.len() {
        return Err(Error::State(format!(
            "cache holds {} layers, network has {}",
            cache.inputs.len(),
            net.layers.len()
        )));
    }
    for (i, t) in cache.inputs.iter().enumerate() {
        if t.shape()[1..] != shapes[i][..] {
            return Err(Error::State(format!("cache input for layer {i} has shape {:?}", t.shape())));
        }
    }
    check_labels(net, &cache.output, labels)?;
    let n = cache.output.shape()[0];
    let nf = F::lit(n as f64);
    let floor = F::lit(PROB_FLOOR);

    let mut grads = params.zeros_like();
    let last = net.layers.len() - 1;

    // Gradient with respect to the head input.
    let (mut g, start) = match net.layers[last] {
        LayerSpec::Softmax => {
            // d/dz of -sum_c y_c ln softmax(z)_c is p * sum(y) - y
            let k = net.classes;
            let mut g = Vec::with_capacity(n * k);
            for (prow, yrow) in cache.output.data().chunks_exact(k).zip(labels.data().chunks_exact(k)) {
                let ysum: F = yrow.iter().copied().sum();
                g.extend(prow.iter().zip(yrow).map(|(&p, &y)| (p * ysum - y) / nf));
            }
            (g, last)
        }
        LayerSpec::Rbf {
            centroid_dim,
            length_scale,
        } => {
            let k = F::lit(net.classes as f64);
            let dk: Vec<F> = cache
                .output
                .data()
                .iter()
                .zip(labels.data())
                .map(|(&p, &y)| {
                    let pos = if p > floor { y / p } else { F::zero() };
                    let neg = if F::one() - p > floor {
                        (F::one() - y) / (F::one() - p)
                    } else {
                        F::zero()
                    };
                    -(pos - neg) / (nf * k)
                })
                .collect();
            let Aux::Rbf(resid) = &cache.aux[last] else {
                return Err(Error::State("rbf cache entry missing".into()));
            };
            let x = &cache.inputs[last];
            let p = &params.layers[last].tensors;
            let (df, dproj, dcent) = layers::rbf_backward(
                x.data(),
                p[0].data(),
                cache.output.data(),
                resid,
                &dk,
                n,
                x.row_len(),
                net.classes,
                centroid_dim,
                F::lit(length_scale),
            );
            let gt = &mut grads.layers[last].tensors;
            gt[0].data_mut().copy_from_slice(&dproj);
            gt[1].data_mut().copy_from_slice(&dcent);
            (df, last)
        }
        _ => unreachable!("validated head"),
    };

    for i in (0..start).rev() {
        let layer = &net.layers[i];
        let x = &cache.inputs[i];
        let xd = x.data();
        let ins = &shapes[i];
        let outs = &shapes[i + 1];
        let out_data = cache
            .inputs
            .get(i + 1)
            .map(Tensor::data)
            .unwrap_or_else(|| cache.output.data());
        let p = &params.layers[i].tensors;
        let gt = &mut grads.layers[i].tensors;
        g = match *layer {
            LayerSpec::Conv2d { kernel, bias, .. } => {
                let d = ConvDims {
                    n,
                    cin: ins[0],
                    h: ins[1],
                    w: ins[2],
                    cout: outs[0],
                    kh: kernel.0,
                    kw: kernel.1,
                };
                let (dx, dw, db) = match &cache.weight_masks[i] {
                    Some(m) => {
                        let w: Vec<F> = p[0].data().iter().zip(m).map(|(&a, &b)| a * b).collect();
                        let (dx, mut dw, db) = layers::conv2d_backward(xd, &w, &g, d, bias, i > 0);
                        for (v, &mv) in dw.iter_mut().zip(m) {
                            *v = *v * mv;
                        }
                        (dx, dw, db)
                    }
                    None => layers::conv2d_backward(xd, p[0].data(), &g, d, bias, i > 0),
                };
                gt[0].data_mut().copy_from_slice(&dw);
                if let Some(db) = db {
                    gt[1].data_mut().copy_from_slice(&db);
                }
                dx
            }
            LayerSpec::Dense { units, activation } => {
                if activation == Activation::Relu {
                    layers::relu_backward_inplace(&mut g, out_data);
                }
                let inputs_n = x.row_len();
                let masked;
                let w = match &cache.weight_masks[i] {
                    Some(m) => {
                        masked = p[0].data().iter().zip(m).map(|(&a, &b)| a * b).collect::<Vec<F>>();
                        &masked[..]
                    }
                    None => p[0].data(),
                };
                let (dx, mut dw, db) = layers::dense_backward(xd, w, &g, n, inputs_n, units);
                if let Some(m) = &cache.weight_masks[i] {
                    for (v, &mv) in dw.iter_mut().zip(m) {
                        *v = *v * mv;
                    }
                }
                gt[0].data_mut().copy_from_slice(&dw);
                gt[1].data_mut().copy_from_slice(&db);
                dx
            }
            LayerSpec::Batchnorm { eps, .. } => {
                let spatial: usize = ins[1..].iter().product();
                let c = ins[0];
                match &cache.aux[i] {
                    Aux::BnBatch(st) => {
                        let (dx, dgamma, dbeta) =
                            layers::batchnorm_train_backward(&g, p[0].data(), st, n, spatial);
                        gt[0].data_mut().copy_from_slice(&dgamma);
                        gt[1].data_mut().copy_from_slice(&dbeta);
                        dx
                    }
                    Aux::BnRunning => {
                        let eps = F::lit(eps);
                        let (gamma, mean, var) = (p[0].data(), p[2].data(), p[3].data());
                        let mut dgamma = vec![F::zero(); c];
                        let mut dbeta = vec![F::zero(); c];
                        let mut dx = vec![F::zero(); g.len()];
                        for (k, (&gv, &xv)) in g.iter().zip(xd).enumerate() {
                            let ch = (k / spatial) % c;
                            let inv = F::one() / (var[ch] + eps).sqrt();
                            dgamma[ch] = dgamma[ch] + gv * (xv - mean[ch]) * inv;
                            dbeta[ch] = dbeta[ch] + gv;
                            dx[k] = gv * gamma[ch] * inv;
                        }
                        gt[0].data_mut().copy_from_slice(&dgamma);
                        gt[1].data_mut().copy_from_slice(&dbeta);
                        dx
                    }
                    _ => return Err(Error::State(format!("layer {i}: batchnorm cache missing"))),
                }
            }
            LayerSpec::Square => g.iter().zip(xd).map(|(&gv, &xv)| F::lit(2.0) * xv * gv).collect(),
            LayerSpec::Log { floor } => {
                let floor = F::lit(floor);
                g.iter()
                    .zip(xd)
                    .map(|(&gv, &xv)| if xv > floor { gv / xv } else { F::zero() })
                    .collect()
            }
            LayerSpec::Avgpool { size, stride } => {
                let d = PoolDims {
                    n,
                    c: ins[0],
                    h: ins[1],
                    w: ins[2],
                    ph: size.0,
                    pw: size.1,
                    sh: stride.0,
                    sw: stride.1,
                };
                layers::avgpool_backward(&g, d)
            }
            LayerSpec::Dropout { .. } => match &cache.aux[i] {
                Aux::Mask(m) => g.iter().zip(m).map(|(&a, &b)| a * b).collect(),
                _ => g,
            },
            LayerSpec::Dropconnect { .. } => g,
            LayerSpec::FlipoutDense { activation, .. } => {
                if activation == Activation::Relu {
                    layers::relu_backward_inplace(&mut g, out_data);
                }
                let Aux::Flipout(noise) = &cache.aux[i] else {
                    return Err(Error::State(format!("layer {i}: flipout cache missing")));
                };
                let (dx, dmu, drho, dbmu, dbrho) = layers::flipout_backward(
                    xd,
                    p[0].data(),
                    p[1].data(),
                    p[3].data(),
                    noise.as_ref(),
                    &g,
                    n,
                    x.row_len(),
                );
                gt[0].data_mut().copy_from_slice(&dmu);
                gt[1].data_mut().copy_from_slice(&drho);
                gt[2].data_mut().copy_from_slice(&dbmu);
                gt[3].data_mut().copy_from_slice(&dbrho);
                dx
            }
            LayerSpec::Softmax | LayerSpec::Rbf { .. } => {
                return Err(Error::State(format!("layer {i}: head layer before the end")))
            }
        };
    }
    Ok(grads)
}

/// Convenience: one-hot `[n, classes]` targets from class indices.
pub fn one_hot<F: Real>(labels: &[usize], classes: usize) -> Tensor<F> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &c) in labels.iter().enumerate() {
        t.data_mut()[i * classes + c] = F::one();
    }
    t
}
