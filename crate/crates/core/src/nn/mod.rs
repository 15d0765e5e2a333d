//! Trainable network core: layer kernels, forward/backward passes, losses,
//! Adam and the Shallow ConvNet builder.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod kl;
pub mod layers;
pub mod network;
pub mod params;
pub mod spec;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use kl::{kl_mixture_mc, KlEstimate, MixturePrior};
pub use network::{apply_running_stats, backward, forward, loss, one_hot, ForwardCache, ForwardMode};
pub use params::{LayerParams, ParamSet};
pub use spec::{
    build_shallow_convnet, build_variant, Activation, ArchConfig, LayerSpec, LossKind, NetworkSpec,
    Variant,
};

use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Flipout dense layer on `[n, inputs]` input with posterior `N(mu, softplus(rho)^2)`.
/// With `rng` absent the mean weights are used.
pub fn flipout_dense_forward<F: Real>(
    x: &Tensor<F>,
    w_mu: &Tensor<F>,
    w_rho: &Tensor<F>,
    b_mu: &Tensor<F>,
    b_rho: &Tensor<F>,
    rng: Option<&mut Rng>,
) -> crate::Result<Tensor<F>> {
    let [n, inputs] = *x.shape() else {
        return Err(crate::Error::Dimension("flipout input must be [n, inputs]".into()));
    };
    let units = b_mu.len();
    if w_mu.shape() != [inputs, units] || w_rho.shape() != w_mu.shape() || b_rho.len() != units {
        return Err(crate::Error::Dimension("flipout parameter shapes disagree".into()));
    }
    let noise = rng.map(|r| network::sample_flipout_noise(n, inputs, units, r));
    let y = layers::flipout_forward(
        x.data(),
        w_mu.data(),
        w_rho.data(),
        b_mu.data(),
        b_rho.data(),
        noise.as_ref(),
        n,
        inputs,
    );
    Tensor::new(vec![n, units], y)
}

/// RBF kernel values `[n, classes]` for features `[n, f]`, projections
/// `[classes, m, f]` and centroids `[classes, m]`.
pub fn rbf_forward<F: Real>(
    features: &Tensor<F>,
    projection: &Tensor<F>,
    centroids: &Tensor<F>,
    length_scale: f64,
) -> crate::Result<Tensor<F>> {
    let [n, f] = *features.shape() else {
        return Err(crate::Error::Dimension("rbf features must be [n, f]".into()));
    };
    let [k, m, pf] = *projection.shape() else {
        return Err(crate::Error::Dimension("rbf projection must be [classes, m, f]".into()));
    };
    if pf != f || centroids.shape() != [k, m] {
        return Err(crate::Error::Dimension("rbf parameter shapes disagree".into()));
    }
    if !(length_scale > 0.0) {
        return Err(crate::Error::Config("rbf length scale must be > 0".into()));
    }
    let (kern, _) = layers::rbf_forward(
        features.data(),
        projection.data(),
        centroids.data(),
        n,
        f,
        k,
        m,
        F::lit(length_scale),
    );
    Tensor::new(vec![n, k], kern)
}
