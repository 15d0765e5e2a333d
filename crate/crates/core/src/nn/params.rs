use crate::error::{Error, Result};
use crate::nn::spec::{LayerSpec, NetworkSpec};
use crate::real::{softplus_inv, Real};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

/// Flipout posterior initialisation: mean spread and target sigma.
pub const FLIPOUT_INIT_MU_STD: f64 = 0.05;
pub const FLIPOUT_INIT_SIGMA: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub tensors: Vec<Tensor<F>>,
}

/// Learned parameters of a network, one entry per layer in `NetworkSpec`
/// order. Layers without parameters hold an empty list.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<F> {
    pub layers: Vec<LayerParams<F>>,
}

/// Tensor names per layer kind, in storage order.
pub fn param_names(layer: &LayerSpec) -> &'static [&'static str] {
    match layer {
        LayerSpec::Conv2d { bias: true, .. } | LayerSpec::Dense { .. } => &["weight", "bias"],
        LayerSpec::Conv2d { bias: false, .. } => &["weight"],
        LayerSpec::Batchnorm { .. } => &["gamma", "beta", "running_mean", "running_var"],
        LayerSpec::FlipoutDense { .. } => &["weight_mu", "weight_rho", "bias_mu", "bias_rho"],
        LayerSpec::Rbf { .. } => &["projection", "centroids"],
        _ => &[],
    }
}

/// Whether the `idx`-th tensor of `layer` is updated by the optimizer.
pub fn is_trainable(layer: &LayerSpec, idx: usize) -> bool {
    !matches!(layer, LayerSpec::Batchnorm { .. } if idx >= 2)
}

/// Expected tensor shapes for every layer.
pub fn param_shapes(net: &NetworkSpec) -> Result<Vec<Vec<Vec<usize>>>> {
    let shapes = net.shapes()?;
    Ok(net
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let input = &shapes[i];
            let fan_in: usize = input.iter().product();
            match *layer {
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    bias,
                } => {
                    let mut v = vec![vec![filters, input[0], kernel.0, kernel.1]];
                    if bias {
                        v.push(vec![filters]);
                    }
                    v
                }
                LayerSpec::Dense { units, .. } => vec![vec![fan_in, units], vec![units]],
                LayerSpec::FlipoutDense { units, .. } => vec![
                    vec![fan_in, units],
                    vec![fan_in, units],
                    vec![units],
                    vec![units],
                ],
                LayerSpec::Batchnorm { .. } => {
                    let c = input[0];
                    vec![vec![c]; 4]
                }
                LayerSpec::Rbf { centroid_dim, .. } => vec![
                    vec![net.classes, centroid_dim, fan_in],
                    vec![net.classes, centroid_dim],
                ],
                _ => vec![],
            }
        })
        .collect())
}

impl<F: Real> ParamSet<F> {
    /// Glorot-uniform weights, zero biases, unit batchnorm scale, and the
    /// flipout/rbf initialisations documented on the constants above.
    pub fn init(net: &NetworkSpec, rng: &mut Rng) -> Result<Self> {
        let shapes = param_shapes(net)?;
        let mut layers = Vec::with_capacity(net.layers.len());
        for (layer, shapes) in net.layers.iter().zip(&shapes) {
            let tensors = match layer {
                LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. } => {
                    let w = &shapes[0];
                    let (fan_in, fan_out) = if w.len() == 4 {
                        let rf = w[2] * w[3];
                        (w[1] * rf, w[0] * rf)
                    } else {
                        (w[0], w[1])
                    };
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let mut v = vec![Tensor::from_fn(w, |_| {
                        F::lit((2.0 * rng::uniform(rng) - 1.0) * limit)
                    })];
                    if shapes.len() > 1 {
                        v.push(Tensor::zeros(&shapes[1]));
                    }
                    v
                }
                LayerSpec::Batchnorm { .. } => vec![
                    Tensor::full(&shapes[0], F::one()),
                    Tensor::zeros(&shapes[1]),
                    Tensor::zeros(&shapes[2]),
                    Tensor::full(&shapes[3], F::one()),
                ],
                LayerSpec::FlipoutDense { .. } => {
                    let rho = F::lit(softplus_inv(FLIPOUT_INIT_SIGMA));
                    vec![
                        Tensor::from_fn(&shapes[0], |_| {
                            F::lit(FLIPOUT_INIT_MU_STD * rng::normal(rng))
                        }),
                        Tensor::full(&shapes[1], rho),
                        Tensor::zeros(&shapes[2]),
                        Tensor::full(&shapes[3], rho),
                    ]
                }
                LayerSpec::Rbf { .. } => {
                    let fan_in = shapes[0][2] as f64;
                    let std = 1.0 / fan_in.sqrt();
                    vec![
                        Tensor::from_fn(&shapes[0], |_| F::lit(std * rng::normal(rng))),
                        Tensor::from_fn(&shapes[1], |_| F::lit(0.1 * rng::normal(rng))),
                    ]
                }
                _ => vec![],
            };
            layers.push(LayerParams { tensors });
        }
        Ok(Self { layers })
    }

    /// Zero-filled set with the same shapes, used for gradients.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    tensors: l.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
                })
                .collect(),
        }
    }

    pub fn cast<G: Real>(&self) -> ParamSet<G> {
        ParamSet {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    tensors: l.tensors.iter().map(Tensor::cast).collect(),
                })
                .collect(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| &l.tensors)
            .map(Tensor::len)
            .sum()
    }

    /// Checks that the set matches the network layout.
    pub fn check(&self, net: &NetworkSpec) -> Result<()> {
        let shapes = param_shapes(net)?;
        if shapes.len() != self.layers.len() {
            return Err(Error::State(format!(
                "parameter set has {} layers, network has {}",
                self.layers.len(),
                shapes.len()
            )));
        }
        for (i, (expected, layer)) in shapes.iter().zip(&self.layers).enumerate() {
            let got: Vec<&[usize]> = layer.tensors.iter().map(Tensor::shape).collect();
            let want: Vec<&[usize]> = expected.iter().map(Vec::as_slice).collect();
            if got != want {
                return Err(Error::State(format!(
                    "layer {i}: parameter shapes {got:?} do not match {want:?}"
                )));
            }
            if let LayerSpec::Batchnorm { .. } = net.layers[i] {
                if layer.tensors[3].data().iter().any(|v| *v < F::zero()) {
                    return Err(Error::State(format!("layer {i}: negative running variance")));
                }
            }
        }
        Ok(())
    }

    /// `(layer, tensor, name)` for every tensor, in storage order.
    pub fn named<'a>(
        &'a self,
        net: &'a NetworkSpec,
    ) -> impl Iterator<Item = (String, &'a Tensor<F>)> + 'a {
        self.layers
            .iter()
            .zip(&net.layers)
            .enumerate()
            .flat_map(|(i, (lp, spec))| {
                lp.tensors
                    .iter()
                    .zip(param_names(spec))
                    .map(move |(t, name)| (format!("{i}.{name}"), t))
            })
    }
}
