use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride-1 valid convolution over the (electrode, time) plane.
    Conv2d {
        filters: usize,
        kernel: (usize, usize),
        bias: bool,
    },
    Dense {
        units: usize,
        activation: Activation,
    },
    Batchnorm {
        momentum: f64,
        eps: f64,
    },
    Square,
    /// `ln(max(x, floor))`
    Log {
        floor: f64,
    },
    Avgpool {
        size: (usize, usize),
        stride: (usize, usize),
    },
    Dropout {
        rate: f64,
    },
    /// Masks the weights of the conv2d or dense layer directly before it.
    Dropconnect {
        rate: f64,
    },
    FlipoutDense {
        units: usize,
        activation: Activation,
    },
    Rbf {
        centroid_dim: usize,
        length_scale: f64,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Batchnorm { .. } => "batchnorm",
            LayerSpec::Square => "square",
            LayerSpec::Log { .. } => "log",
            LayerSpec::Avgpool { .. } => "avgpool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Dropconnect { .. } => "dropconnect",
            LayerSpec::FlipoutDense { .. } => "flipout_dense",
            LayerSpec::Rbf { .. } => "rbf",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn is_head(&self) -> bool {
        matches!(self, LayerSpec::Softmax | LayerSpec::Rbf { .. })
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dropout { .. } | LayerSpec::Dropconnect { .. } | LayerSpec::FlipoutDense { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CategoricalCe,
    BinaryCe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub channels: usize,
    pub timesteps: usize,
    pub classes: usize,
    pub loss: LossKind,
}

impl NetworkSpec {
    /// Per-sample input shape `[1, channels, timesteps]`.
    pub fn input_shape(&self) -> Vec<usize> {
        vec![1, self.channels, self.timesteps]
    }

    pub fn head(&self) -> Option<&LayerSpec> {
        self.layers.last().filter(|l| l.is_head())
    }

    pub fn has_rbf_head(&self) -> bool {
        matches!(self.head(), Some(LayerSpec::Rbf { .. }))
    }

    pub fn has_stochastic_layers(&self) -> bool {
        self.layers.iter().any(LayerSpec::is_stochastic)
    }

    pub fn has_flipout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::FlipoutDense { .. }))
    }

    /// Validates the topology and returns the per-sample input shape of every
    /// layer followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.channels == 0 || self.timesteps == 0 || self.classes == 0 {
            return Err(Error::config("channels, timesteps and classes must be positive"));
        }
        let heads = self.layers.iter().filter(|l| l.is_head()).count();
        if heads != 1 || !self.layers.last().is_some_and(LayerSpec::is_head) {
            return Err(Error::config("network needs exactly one output head, placed last"));
        }
        match (self.has_rbf_head(), self.loss) {
            (true, LossKind::BinaryCe) | (false, LossKind::CategoricalCe) => {}
            _ => {
                return Err(Error::config(
                    "rbf head requires binary_ce and softmax head requires categorical_ce",
                ))
            }
        }

        let mut shapes = vec![self.input_shape()];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().expect("non-empty").clone();
            let flat: usize = cur.iter().product();
            let next = match *layer {
                LayerSpec::Conv2d { filters, kernel, .. } => {
                    let [_, h, w] = as_image(&cur, i)?;
                    if filters == 0 || kernel.0 == 0 || kernel.1 == 0 || kernel.0 > h || kernel.1 > w {
                        return Err(Error::config(format!(
                            "layer {i}: conv kernel {kernel:?} does not fit input {cur:?}"
                        )));
                    }
                    vec![filters, h - kernel.0 + 1, w - kernel.1 + 1]
                }
                LayerSpec::Avgpool { size, stride } => {
                    let [c, h, w] = as_image(&cur, i)?;
                    if size.0 == 0 || size.1 == 0 || stride.0 == 0 || stride.1 == 0 || size.0 > h || size.1 > w {
                        return Err(Error::config(format!(
                            "layer {i}: pool {size:?}/{stride:?} does not fit input {cur:?}"
                        )));
                    }
                    vec![c, (h - size.0) / stride.0 + 1, (w - size.1) / stride.1 + 1]
                }
                LayerSpec::Dense { units, .. } | LayerSpec::FlipoutDense { units, .. } => {
                    if units == 0 {
                        return Err(Error::config(format!("layer {i}: zero units")));
                    }
                    vec![units]
                }
                LayerSpec::Rbf {
                    centroid_dim,
                    length_scale,
                } => {
                    if !(length_scale > 0.0) || centroid_dim == 0 {
                        return Err(Error::config(format!(
                            "layer {i}: rbf needs length scale > 0 and centroid dim > 0"
                        )));
                    }
                    let _ = flat;
                    vec![self.classes]
                }
                LayerSpec::Dropout { rate } | LayerSpec::Dropconnect { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::config(format!("layer {i}: drop rate {rate} not in [0,1)")));
                    }
                    if matches!(layer, LayerSpec::Dropconnect { .. })
                        && !matches!(
                            i.checked_sub(1).map(|j| &self.layers[j]),
                            Some(LayerSpec::Conv2d { .. }) | Some(LayerSpec::Dense { .. })
                        )
                    {
                        return Err(Error::config(format!(
                            "layer {i}: dropconnect must follow a conv2d or dense layer"
                        )));
                    }
                    cur
                }
                LayerSpec::Batchnorm { momentum, eps } => {
                    if !(0.0..=1.0).contains(&momentum) || !(eps > 0.0) {
                        return Err(Error::config(format!("layer {i}: invalid batchnorm settings")));
                    }
                    cur
                }
                LayerSpec::Log { floor } => {
                    if !(floor > 0.0) {
                        return Err(Error::config(format!("layer {i}: log floor must be > 0")));
                    }
                    cur
                }
                LayerSpec::Square => cur,
                LayerSpec::Softmax => {
                    if flat != self.classes {
                        return Err(Error::config(format!(
                            "softmax input has {flat} units, expected {} classes",
                            self.classes
                        )));
                    }
                    vec![self.classes]
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }
}

fn as_image(shape: &[usize], layer: usize) -> Result<[usize; 3]> {
    match *shape {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::config(format!(
            "layer {layer}: expects a (channels, height, width) input, got {shape:?}"
        ))),
    }
}

/// Network variants of the Shallow ConvNet, one per uncertainty method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dropout,
    McDropout,
    Dropconnect,
    McDropconnect,
    Flipout,
    EnsembleMember,
    Duq,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Dropout,
        Variant::McDropout,
        Variant::Dropconnect,
        Variant::McDropconnect,
        Variant::Flipout,
        Variant::EnsembleMember,
        Variant::Duq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dropout => "dropout",
            Variant::McDropout => "mc_dropout",
            Variant::Dropconnect => "dropconnect",
            Variant::McDropconnect => "mc_dropconnect",
            Variant::Flipout => "flipout",
            Variant::EnsembleMember => "ensemble_member",
            Variant::Duq => "duq",
        }
    }

    /// Whether inference keeps the stochastic layers active.
    pub fn samples_at_inference(self) -> bool {
        matches!(self, Variant::McDropout | Variant::McDropconnect | Variant::Flipout)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown variant '{s}'")))
    }
}

/// Shallow ConvNet hyperparameters. Defaults are the full-size network with
/// the per-method settings used for the motor-imagery experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub temporal_filters: usize,
    pub temporal_kernel: usize,
    pub spatial_filters: usize,
    pub pool_size: usize,
    pub pool_stride: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub log_floor: f64,
    pub dropout_rate: f64,
    pub dropconnect_rate: f64,
    pub flipout_hidden: usize,
    pub duq_hidden: usize,
    pub duq_centroid_dim: usize,
    pub duq_length_scale: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            temporal_filters: 40,
            temporal_kernel: 25,
            spatial_filters: 40,
            pool_size: 75,
            pool_stride: 15,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            log_floor: 1e-6,
            dropout_rate: 0.2,
            dropconnect_rate: 0.1,
            flipout_hidden: 10,
            duq_hidden: 100,
            duq_centroid_dim: 100,
            duq_length_scale: 0.4,
        }
    }
}

pub fn build_shallow_convnet(
    variant: &str,
    channels: usize,
    timesteps: usize,
    classes: usize,
) -> Result<NetworkSpec> {
    let variant: Variant = variant.parse()?;
    build_variant(variant, channels, timesteps, classes, &ArchConfig::default())
}

pub fn build_variant(
    variant: Variant,
    channels: usize,
    timesteps: usize,
    classes: usize,
    arch: &ArchConfig,
) -> Result<NetworkSpec> {
    let mut layers = vec![
        LayerSpec::Conv2d {
            filters: arch.temporal_filters,
            kernel: (1, arch.temporal_kernel),
            bias: false,
        },
        LayerSpec::Conv2d {
            filters: arch.spatial_filters,
            kernel: (channels, 1),
            bias: false,
        },
    ];
    if matches!(variant, Variant::Dropconnect | Variant::McDropconnect) {
        layers.push(LayerSpec::Dropconnect {
            rate: arch.dropconnect_rate,
        });
    }
    layers.extend([
        LayerSpec::Batchnorm {
            momentum: arch.bn_momentum,
            eps: arch.bn_eps,
        },
        LayerSpec::Square,
        LayerSpec::Avgpool {
            size: (1, arch.pool_size),
            stride: (1, arch.pool_stride),
        },
        LayerSpec::Log {
            floor: arch.log_floor,
        },
    ]);

    let dense_out = LayerSpec::Dense {
        units: classes,
        activation: Activation::Linear,
    };
    let loss = match variant {
        Variant::Dropout | Variant::McDropout | Variant::EnsembleMember => {
            layers.push(LayerSpec::Dropout {
                rate: arch.dropout_rate,
            });
            layers.extend([dense_out, LayerSpec::Softmax]);
            LossKind::CategoricalCe
        }
        Variant::Dropconnect | Variant::McDropconnect => {
            layers.extend([dense_out, LayerSpec::Softmax]);
            LossKind::CategoricalCe
        }
        Variant::Flipout => {
            layers.extend([
                LayerSpec::Dense {
                    units: arch.flipout_hidden,
                    activation: Activation::Relu,
                },
                LayerSpec::FlipoutDense {
                    units: arch.flipout_hidden,
                    activation: Activation::Relu,
                },
                LayerSpec::FlipoutDense {
                    units: classes,
                    activation: Activation::Linear,
                },
                LayerSpec::Softmax,
            ]);
            LossKind::CategoricalCe
        }
        Variant::Duq => {
            layers.extend([
                LayerSpec::Dense {
                    units: arch.duq_hidden,
                    activation: Activation::Relu,
                },
                LayerSpec::Rbf {
                    centroid_dim: arch.duq_centroid_dim,
                    length_scale: arch.duq_length_scale,
                },
            ]);
            LossKind::BinaryCe
        }
    };

    let net = NetworkSpec {
        layers,
        channels,
        timesteps,
        classes,
        loss,
    };
    net.validate()?;
    Ok(net)
}
