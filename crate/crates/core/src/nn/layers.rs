//! Slice-level forward and backward kernels for each layer kind.
//!
//! Image tensors are `[n, channels, height, width]` in row-major order; dense
//! tensors are `[n, features]`.

#![allow(clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

use crate::real::{sigmoid, softplus, Real};

#[derive(Debug, Clone, Copy)]
pub struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    pub fn oh(&self) -> usize {
        self.h - self.kh + 1
    }
    pub fn ow(&self) -> usize {
        self.w - self.kw + 1
    }
}

pub fn conv2d_forward<F: Real>(x: &[F], weight: &[F], bias: Option<&[F]>, d: ConvDims) -> Vec<F> {
    let (oh, ow) = (d.oh(), d.ow());
    let plane = oh * ow;
    let mut y = vec![F::zero(); d.n * d.cout * plane];
    for b in 0..d.n {
        for co in 0..d.cout {
            let out = &mut y[(b * d.cout + co) * plane..][..plane];
            if let Some(bias) = bias {
                out.fill(bias[co]);
            }
            for ci in 0..d.cin {
                let xin = &x[(b * d.cin + ci) * d.h * d.w..][..d.h * d.w];
                for i in 0..d.kh {
                    for j in 0..d.kw {
                        let wv = weight[((co * d.cin + ci) * d.kh + i) * d.kw + j];
                        for r in 0..oh {
                            let xrow = &xin[(r + i) * d.w + j..][..ow];
                            let yrow = &mut out[r * ow..][..ow];
                            for (yv, &xv) in yrow.iter_mut().zip(xrow) {
                                *yv = *yv + wv * xv;
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns `(dx, dweight, dbias)`.
pub fn conv2d_backward<F: Real>(
    x: &[F],
    weight: &[F],
    dy: &[F],
    d: ConvDims,
    with_bias: bool,
    need_dx: bool,
) -> (Vec<F>, Vec<F>, Option<Vec<F>>) {
    let (oh, ow) = (d.oh(), d.ow());
    let plane = oh * ow;
    let mut dx = vec![F::zero(); x.len()];
    let mut dw = vec![F::zero(); weight.len()];
    let mut db = with_bias.then(|| vec![F::zero(); d.cout]);
    for b in 0..d.n {
        for co in 0..d.cout {
            let g = &dy[(b * d.cout + co) * plane..][..plane];
            if let Some(db) = db.as_mut() {
                db[co] = db[co] + g.iter().copied().sum::<F>();
            }
            for ci in 0..d.cin {
                let base = (b * d.cin + ci) * d.h * d.w;
                for i in 0..d.kh {
                    for j in 0..d.kw {
                        let widx = ((co * d.cin + ci) * d.kh + i) * d.kw + j;
                        let wv = weight[widx];
                        let mut acc = F::zero();
                        for r in 0..oh {
                            let off = base + (r + i) * d.w + j;
                            let grow = &g[r * ow..][..ow];
                            let xrow = &x[off..][..ow];
                            acc = acc + xrow.iter().zip(grow).map(|(&a, &b)| a * b).sum::<F>();
                            if !need_dx {
                                continue;
                            }
                            let dxrow = &mut dx[off..][..ow];
                            for (dv, &gv) in dxrow.iter_mut().zip(grow) {
                                *dv = *dv + wv * gv;
                            }
                        }
                        dw[widx] = dw[widx] + acc;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// `y = x W + b` with `W` stored `[inputs, units]`.
pub fn dense_forward<F: Real>(x: &[F], weight: &[F], bias: &[F], n: usize, inputs: usize) -> Vec<F> {
    let units = bias.len();
    let mut y = Vec::with_capacity(n * units);
    for b in 0..n {
        let mut row = bias.to_vec();
        for (i, &xv) in x[b * inputs..][..inputs].iter().enumerate() {
            if xv == F::zero() {
                continue;
            }
            for (yv, &wv) in row.iter_mut().zip(&weight[i * units..][..units]) {
                *yv = *yv + xv * wv;
            }
        }
        y.extend(row);
    }
    y
}

/// Returns `(dx, dweight, dbias)`.
pub fn dense_backward<F: Real>(
    x: &[F],
    weight: &[F],
    dy: &[F],
    n: usize,
    inputs: usize,
    units: usize,
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let mut dx = vec![F::zero(); n * inputs];
    let mut dw = vec![F::zero(); inputs * units];
    let mut db = vec![F::zero(); units];
    for b in 0..n {
        let g = &dy[b * units..][..units];
        for (dbv, &gv) in db.iter_mut().zip(g) {
            *dbv = *dbv + gv;
        }
        let xr = &x[b * inputs..][..inputs];
        for i in 0..inputs {
            let wrow = &weight[i * units..][..units];
            dx[b * inputs + i] = wrow.iter().zip(g).map(|(&w, &gv)| w * gv).sum();
            let xv = xr[i];
            for (dwv, &gv) in dw[i * units..][..units].iter_mut().zip(g) {
                *dwv = *dwv + xv * gv;
            }
        }
    }
    (dx, dw, db)
}

pub fn relu_inplace<F: Real>(y: &mut [F]) {
    for v in y {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

/// Zeroes gradients where the rectified output was clipped.
pub fn relu_backward_inplace<F: Real>(dy: &mut [F], y: &[F]) {
    for (g, &v) in dy.iter_mut().zip(y) {
        if v <= F::zero() {
            *g = F::zero();
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PoolDims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub ph: usize,
    pub pw: usize,
    pub sh: usize,
    pub sw: usize,
}

impl PoolDims {
    pub fn oh(&self) -> usize {
        (self.h - self.ph) / self.sh + 1
    }
    pub fn ow(&self) -> usize {
        (self.w - self.pw) / self.sw + 1
    }
}

pub fn avgpool_forward<F: Real>(x: &[F], d: PoolDims) -> Vec<F> {
    let (oh, ow) = (d.oh(), d.ow());
    let scale = F::one() / F::lit((d.ph * d.pw) as f64);
    let mut y = Vec::with_capacity(d.n * d.c * oh * ow);
    for plane in x.chunks_exact(d.h * d.w) {
        for r in 0..oh {
            for q in 0..ow {
                let mut acc = F::zero();
                for i in 0..d.ph {
                    let row = &plane[(r * d.sh + i) * d.w + q * d.sw..][..d.pw];
                    acc = acc + row.iter().copied().sum::<F>();
                }
                y.push(acc * scale);
            }
        }
    }
    y
}

pub fn avgpool_backward<F: Real>(dy: &[F], d: PoolDims) -> Vec<F> {
    let (oh, ow) = (d.oh(), d.ow());
    let scale = F::one() / F::lit((d.ph * d.pw) as f64);
    let mut dx = vec![F::zero(); d.n * d.c * d.h * d.w];
    for (p, plane) in dx.chunks_exact_mut(d.h * d.w).enumerate() {
        let g = &dy[p * oh * ow..][..oh * ow];
        for r in 0..oh {
            for q in 0..ow {
                let gv = g[r * ow + q] * scale;
                for i in 0..d.ph {
                    for v in &mut plane[(r * d.sh + i) * d.w + q * d.sw..][..d.pw] {
                        *v = *v + gv;
                    }
                }
            }
        }
    }
    dx
}

/// Batch statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnBatch<F> {
    pub xhat: Vec<F>,
    pub inv_std: Vec<F>,
    pub mean: Vec<F>,
    pub var: Vec<F>,
}

/// Normalises per channel over the batch and spatial positions. `spatial` is
/// the number of positions per channel per sample (1 for dense input).
pub fn batchnorm_train<F: Real>(
    x: &[F],
    gamma: &[F],
    beta: &[F],
    n: usize,
    spatial: usize,
    eps: F,
) -> (Vec<F>, BnBatch<F>) {
    let c = gamma.len();
    let count = F::lit((n * spatial) as f64);
    let mut mean = vec![F::zero(); c];
    let mut var = vec![F::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let s = &x[(b * c + ch) * spatial..][..spatial];
            mean[ch] = mean[ch] + s.iter().copied().sum::<F>();
        }
    }
    for m in &mut mean {
        *m = *m / count;
    }
    for b in 0..n {
        for ch in 0..c {
            let s = &x[(b * c + ch) * spatial..][..spatial];
            let m = mean[ch];
            var[ch] = var[ch] + s.iter().map(|&v| (v - m) * (v - m)).sum::<F>();
        }
    }
    for v in &mut var {
        *v = *v / count;
    }
    let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![F::zero(); x.len()];
    let mut y = vec![F::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * spatial;
            for k in off..off + spatial {
                let h = (x[k] - mean[ch]) * inv_std[ch];
                xhat[k] = h;
                y[k] = gamma[ch] * h + beta[ch];
            }
        }
    }
    (
        y,
        BnBatch {
            xhat,
            inv_std,
            mean,
            var,
        },
    )
}

/// Returns `(dx, dgamma, dbeta)` for batch-statistics normalisation.
pub fn batchnorm_train_backward<F: Real>(
    dy: &[F],
    gamma: &[F],
    st: &BnBatch<F>,
    n: usize,
    spatial: usize,
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let c = gamma.len();
    let count = F::lit((n * spatial) as f64);
    let mut dgamma = vec![F::zero(); c];
    let mut dbeta = vec![F::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * spatial;
            for k in off..off + spatial {
                dbeta[ch] = dbeta[ch] + dy[k];
                dgamma[ch] = dgamma[ch] + dy[k] * st.xhat[k];
            }
        }
    }
    let mut dx = vec![F::zero(); dy.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * spatial;
            let k1 = gamma[ch] * st.inv_std[ch] / count;
            for k in off..off + spatial {
                dx[k] = k1 * (count * dy[k] - dbeta[ch] - st.xhat[k] * dgamma[ch]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Normalisation with fixed running statistics. Returns `(y, scale)` where
/// `scale[c] = gamma[c] / sqrt(var[c] + eps)`.
pub fn batchnorm_running<F: Real>(
    x: &[F],
    gamma: &[F],
    beta: &[F],
    mean: &[F],
    var: &[F],
    spatial: usize,
    eps: F,
) -> (Vec<F>, Vec<F>) {
    let c = gamma.len();
    let scale: Vec<F> = (0..c).map(|ch| gamma[ch] / (var[ch] + eps).sqrt()).collect();
    let y = x
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let ch = (k / spatial) % c;
            (v - mean[ch]) * scale[ch] + beta[ch]
        })
        .collect();
    (y, scale)
}

/// Sampled noise for one flipout call.
#[derive(Debug, Clone)]
pub struct FlipoutNoise<F> {
    /// Shared standard-normal weight perturbation `[inputs, units]`.
    pub eps_w: Vec<F>,
    /// Standard-normal bias perturbation `[units]`.
    pub eps_b: Vec<F>,
    /// Per-example input signs `[n, inputs]`.
    pub sign_in: Vec<F>,
    /// Per-example output signs `[n, units]`.
    pub sign_out: Vec<F>,
}

/// Flipout dense layer pre-activation:
/// `y_n = x_n mu + ((x_n * s_n)(sigma * E)) * r_n + b`, with `sigma = softplus(rho)`
/// and `b = bias_mu + softplus(bias_rho) * eps_b`. Without noise this is the mean
/// forward `x mu + bias_mu`.
#[allow(clippy::too_many_arguments)]
pub fn flipout_forward<F: Real>(
    x: &[F],
    w_mu: &[F],
    w_rho: &[F],
    b_mu: &[F],
    b_rho: &[F],
    noise: Option<&FlipoutNoise<F>>,
    n: usize,
    inputs: usize,
) -> Vec<F> {
    let units = b_mu.len();
    let Some(noise) = noise else {
        return dense_forward(x, w_mu, b_mu, n, inputs);
    };
    let bias: Vec<F> = (0..units)
        .map(|j| b_mu[j] + softplus(b_rho[j]) * noise.eps_b[j])
        .collect();
    let mut y = dense_forward(x, w_mu, &bias, n, inputs);
    let pert: Vec<F> = w_rho
        .iter()
        .zip(&noise.eps_w)
        .map(|(&r, &e)| softplus(r) * e)
        .collect();
    let signed: Vec<F> = x
        .iter()
        .zip(&noise.sign_in)
        .map(|(&a, &s)| a * s)
        .collect();
    let zero_bias = vec![F::zero(); units];
    let v = dense_forward(&signed, &pert, &zero_bias, n, inputs);
    for ((yv, vv), &r) in y.iter_mut().zip(v).zip(&noise.sign_out) {
        *yv = *yv + vv * r;
    }
    y
}

/// Gradients `(dx, dw_mu, dw_rho, db_mu, db_rho)` of the flipout layer.
#[allow(clippy::too_many_arguments)]
pub fn flipout_backward<F: Real>(
    x: &[F],
    w_mu: &[F],
    w_rho: &[F],
    b_rho: &[F],
    noise: Option<&FlipoutNoise<F>>,
    dy: &[F],
    n: usize,
    inputs: usize,
) -> (Vec<F>, Vec<F>, Vec<F>, Vec<F>, Vec<F>) {
    let units = b_rho.len();
    let (mut dx, dw_mu, db_mu) = dense_backward(x, w_mu, dy, n, inputs, units);
    let Some(noise) = noise else {
        return (dx, dw_mu, vec![F::zero(); w_rho.len()], db_mu, vec![F::zero(); units]);
    };
    let pert: Vec<F> = w_rho
        .iter()
        .zip(&noise.eps_w)
        .map(|(&r, &e)| softplus(r) * e)
        .collect();
    let signed: Vec<F> = x.iter().zip(&noise.sign_in).map(|(&a, &s)| a * s).collect();
    let dv: Vec<F> = dy.iter().zip(&noise.sign_out).map(|(&g, &r)| g * r).collect();
    let (du, dpert, _) = dense_backward(&signed, &pert, &dv, n, inputs, units);
    for ((d, u), &s) in dx.iter_mut().zip(du).zip(&noise.sign_in) {
        *d = *d + u * s;
    }
    let dw_rho = dpert
        .iter()
        .zip(&noise.eps_w)
        .zip(w_rho)
        .map(|((&g, &e), &r)| g * e * sigmoid(r))
        .collect();
    let db_rho = (0..units)
        .map(|j| {
            let g: F = (0..n).map(|b| dy[b * units + j]).sum();
            g * noise.eps_b[j] * sigmoid(b_rho[j])
        })
        .collect();
    (dx, dw_mu, dw_rho, db_mu, db_rho)
}

/// RBF kernel head. Returns `(kernel [n, k], residuals [n, k, m])` where the
/// residual is `W_c f - e_c` and
/// `K_c = exp(-(1/m) |W_c f - e_c|^2 / (2 sigma^2))`.
pub fn rbf_forward<F: Real>(
    f: &[F],
    proj: &[F],
    centroids: &[F],
    n: usize,
    features: usize,
    classes: usize,
    dim: usize,
    length_scale: F,
) -> (Vec<F>, Vec<F>) {
    let mut kernel = Vec::with_capacity(n * classes);
    let mut resid = Vec::with_capacity(n * classes * dim);
    let denom = F::lit(2.0) * length_scale * length_scale * F::lit(dim as f64);
    for b in 0..n {
        let fr = &f[b * features..][..features];
        for c in 0..classes {
            let mut sq = F::zero();
            for i in 0..dim {
                let wrow = &proj[(c * dim + i) * features..][..features];
                let z = wrow.iter().zip(fr).map(|(&w, &x)| w * x).sum::<F>()
                    - centroids[c * dim + i];
                sq = sq + z * z;
                resid.push(z);
            }
            // exp underflow would leave (0, 1]
            kernel.push((-sq / denom).exp().max(F::min_positive_value()));
        }
    }
    (kernel, resid)
}

/// Returns `(df, dproj, dcentroids)` given upstream `dk`.
#[allow(clippy::too_many_arguments)]
pub fn rbf_backward<F: Real>(
    f: &[F],
    proj: &[F],
    kernel: &[F],
    resid: &[F],
    dk: &[F],
    n: usize,
    features: usize,
    classes: usize,
    dim: usize,
    length_scale: F,
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let mut df = vec![F::zero(); n * features];
    let mut dproj = vec![F::zero(); proj.len()];
    let mut dcent = vec![F::zero(); classes * dim];
    let denom = F::lit(2.0) * length_scale * length_scale * F::lit(dim as f64);
    for b in 0..n {
        let fr = &f[b * features..][..features];
        for c in 0..classes {
            let kc = b * classes + c;
            // dK/d(sq) = -K / denom, d(sq)/dz = 2 z
            let dsq = -dk[kc] * kernel[kc] / denom;
            for i in 0..dim {
                let dz = dsq * F::lit(2.0) * resid[kc * dim + i];
                if dz == F::zero() {
                    continue;
                }
                dcent[c * dim + i] = dcent[c * dim + i] - dz;
                let row = (c * dim + i) * features;
                for j in 0..features {
                    dproj[row + j] = dproj[row + j] + dz * fr[j];
                    df[b * features + j] = df[b * features + j] + dz * proj[row + j];
                }
            }
        }
    }
    (df, dproj, dcent)
}

pub fn softmax_rows<F: Real>(x: &[F], classes: usize) -> Vec<F> {
    let mut y = Vec::with_capacity(x.len());
    for row in x.chunks_exact(classes) {
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        let e: Vec<F> = row.iter().map(|&v| (v - m).exp()).collect();
        let s: F = e.iter().copied().sum();
        y.extend(e.into_iter().map(|v| v / s));
    }
    y
}
