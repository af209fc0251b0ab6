//! Batch, instance and frozen-moment normalization plus the scaling layer.

use crate::error::{ensure_dim, Result};
use crate::norm::params::{MomentParams, ScaleParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Where the moments of a normalization come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Stats {
    /// Per channel over (v, u, t).
    Batch,
    /// Per (channel, instance) over (v, u).
    Instance,
    /// Fixed moments; no dependence on other batch elements.
    Frozen,
    /// Identity normalization.
    Identity,
}

/// Normalized activations and the inverse standard deviations used, kept for
/// the backward pass. `inv_std` is indexed by channel (batch and frozen) or by
/// `c + C·t` (instance).
#[derive(Clone, Debug)]
pub(crate) struct Normalized<T> {
    pub xhat: Tensor4<T>,
    pub inv_std: Vec<T>,
    pub stats: Stats,
}

fn channel_moments<T: Scalar>(x: &Tensor4<T>) -> (Vec<f64>, Vec<f64>) {
    let d = x.dims();
    let n = (d.plane() * d.t) as f64;
    let mut mu = vec![0.0; d.c];
    let mut var = vec![0.0; d.c];
    for c in 0..d.c {
        let mut s = 0.0;
        for t in 0..d.t {
            s += x.plane(c, t).iter().map(|v| v.f64()).sum::<f64>();
        }
        let m = s / n;
        let mut q = 0.0;
        for t in 0..d.t {
            q += x
                .plane(c, t)
                .iter()
                .map(|v| {
                    let e = v.f64() - m;
                    e * e
                })
                .sum::<f64>();
        }
        mu[c] = m;
        var[c] = q / n;
    }
    (mu, var)
}

fn plane_moments<T: Scalar>(plane: &[T]) -> (f64, f64) {
    let n = plane.len() as f64;
    let m = plane.iter().map(|v| v.f64()).sum::<f64>() / n;
    let q = plane
        .iter()
        .map(|v| {
            let e = v.f64() - m;
            e * e
        })
        .sum::<f64>();
    (m, q / n)
}

pub(crate) fn batch_normalize<T: Scalar>(
    x: &Tensor4<T>,
    eps: f64,
) -> (Normalized<T>, MomentParams<T>) {
    let d = x.dims();
    let (mu, var) = channel_moments(x);
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(d.c);
    for c in 0..d.c {
        let inv = 1.0 / (var[c] + eps).sqrt();
        inv_std.push(T::of(inv));
        let (m, inv) = (T::of(mu[c]), T::of(inv));
        for t in 0..d.t {
            for v in xhat.plane_mut(c, t) {
                *v = (*v - m) * inv;
            }
        }
    }
    let moments = MomentParams {
        mu: mu.iter().map(|&m| T::of(m)).collect(),
        sigma2: var.iter().map(|&s| T::of(s)).collect(),
        count: 1,
    };
    (
        Normalized {
            xhat,
            inv_std,
            stats: Stats::Batch,
        },
        moments,
    )
}

pub(crate) fn instance_normalize<T: Scalar>(x: &Tensor4<T>, eps: f64) -> Normalized<T> {
    let d = x.dims();
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(d.c * d.t);
    for t in 0..d.t {
        for c in 0..d.c {
            let (m, var) = plane_moments(x.plane(c, t));
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(T::of(inv));
            let (m, inv) = (T::of(m), T::of(inv));
            for v in xhat.plane_mut(c, t) {
                *v = (*v - m) * inv;
            }
        }
    }
    Normalized {
        xhat,
        inv_std,
        stats: Stats::Instance,
    }
}

pub(crate) fn frozen_normalize<T: Scalar>(
    x: &Tensor4<T>,
    moments: &MomentParams<T>,
    eps: f64,
) -> Result<Normalized<T>> {
    let d = x.dims();
    ensure_dim("moment channels", d.c, moments.channels())?;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(d.c);
    for c in 0..d.c {
        let inv = T::of(1.0 / (moments.sigma2[c].f64() + eps).sqrt());
        inv_std.push(inv);
        let m = moments.mu[c];
        for t in 0..d.t {
            for v in xhat.plane_mut(c, t) {
                *v = (*v - m) * inv;
            }
        }
    }
    Ok(Normalized {
        xhat,
        inv_std,
        stats: Stats::Frozen,
    })
}

pub(crate) fn identity_normalize<T: Scalar>(x: &Tensor4<T>) -> Normalized<T> {
    Normalized {
        xhat: x.clone(),
        inv_std: Vec::new(),
        stats: Stats::Identity,
    }
}

/// `dx` from `d xhat`, using the cached normalization.
pub(crate) fn normalize_backward<T: Scalar>(n: &Normalized<T>, dxhat: &Tensor4<T>) -> Tensor4<T> {
    let d = n.xhat.dims();
    let mut dx = dxhat.clone();
    match n.stats {
        Stats::Identity => {}
        Stats::Frozen => {
            for t in 0..d.t {
                for c in 0..d.c {
                    let inv = n.inv_std[c];
                    dx.plane_mut(c, t).iter_mut().for_each(|g| *g *= inv);
                }
            }
        }
        Stats::Batch => {
            let count = (d.plane() * d.t) as f64;
            for c in 0..d.c {
                let mut sum_g = 0.0;
                let mut sum_gx = 0.0;
                for t in 0..d.t {
                    let g = dxhat.plane(c, t);
                    let xh = n.xhat.plane(c, t);
                    sum_g += g.iter().map(|v| v.f64()).sum::<f64>();
                    sum_gx += g.iter().zip(xh).map(|(a, b)| a.f64() * b.f64()).sum::<f64>();
                }
                let mean_g = T::of(sum_g / count);
                let mean_gx = T::of(sum_gx / count);
                let inv = n.inv_std[c];
                for t in 0..d.t {
                    let xh = n.xhat.plane(c, t);
                    let out = dx.plane_mut(c, t);
                    for (o, &x) in out.iter_mut().zip(xh) {
                        *o = inv * (*o - mean_g - x * mean_gx);
                    }
                }
            }
        }
        Stats::Instance => {
            let count = d.plane() as f64;
            for t in 0..d.t {
                for c in 0..d.c {
                    let g = dxhat.plane(c, t);
                    let xh = n.xhat.plane(c, t);
                    let mean_g = T::of(g.iter().map(|v| v.f64()).sum::<f64>() / count);
                    let mean_gx = T::of(
                        g.iter().zip(xh).map(|(a, b)| a.f64() * b.f64()).sum::<f64>() / count,
                    );
                    let inv = n.inv_std[c + d.c * t];
                    let out = dx.plane_mut(c, t);
                    for (o, &x) in out.iter_mut().zip(xh) {
                        *o = inv * (*o - mean_g - x * mean_gx);
                    }
                }
            }
        }
    }
    dx
}

/// Batch normalization with batch statistics; also returns those statistics.
pub fn batch_norm_forward<T: Scalar>(x: &Tensor4<T>, eps: f64) -> (Tensor4<T>, MomentParams<T>) {
    let (n, m) = batch_normalize(x, eps);
    (n.xhat, m)
}

/// Exact input gradient of [`batch_norm_forward`], including the paths through
/// the batch mean and variance.
pub fn batch_norm_backward<T: Scalar>(
    x: &Tensor4<T>,
    upstream: &Tensor4<T>,
    eps: f64,
) -> Result<Tensor4<T>> {
    ensure_dim("upstream length", x.len(), upstream.len())?;
    let (n, _) = batch_normalize(x, eps);
    Ok(normalize_backward(&n, upstream))
}

pub fn instance_norm_forward<T: Scalar>(x: &Tensor4<T>, eps: f64) -> Tensor4<T> {
    instance_normalize(x, eps).xhat
}

pub fn instance_norm_backward<T: Scalar>(
    x: &Tensor4<T>,
    upstream: &Tensor4<T>,
    eps: f64,
) -> Result<Tensor4<T>> {
    ensure_dim("upstream length", x.len(), upstream.len())?;
    Ok(normalize_backward(&instance_normalize(x, eps), upstream))
}

/// Normalization with fixed moments: `(x − μ_c)/√(σ²_c + ε)`.
pub fn frozen_norm_forward<T: Scalar>(
    x: &Tensor4<T>,
    moments: &MomentParams<T>,
    eps: f64,
) -> Result<Tensor4<T>> {
    Ok(frozen_normalize(x, moments, eps)?.xhat)
}

/// The scaling layer `y_{vuct} = s_c·x_{vuct} + b_c`.
pub fn scale_forward<T: Scalar>(x: &Tensor4<T>, p: &ScaleParams<T>) -> Result<Tensor4<T>> {
    let d = x.dims();
    ensure_dim("scale channels", d.c, p.channels())?;
    let mut y = x.clone();
    for t in 0..d.t {
        for c in 0..d.c {
            let (s, b) = (p.s[c], p.b[c]);
            y.plane_mut(c, t).iter_mut().for_each(|v| *v = s * *v + b);
        }
    }
    Ok(y)
}

/// Gradients of the scaling layer: `(dx, (ds, db))`.
pub fn scale_backward<T: Scalar>(
    x: &Tensor4<T>,
    p: &ScaleParams<T>,
    upstream: &Tensor4<T>,
) -> Result<(Tensor4<T>, ScaleParams<T>)> {
    let d = x.dims();
    ensure_dim("scale channels", d.c, p.channels())?;
    ensure_dim("upstream length", x.len(), upstream.len())?;
    let mut dx = upstream.clone();
    let mut grads = ScaleParams::zeros(d.c);
    for t in 0..d.t {
        for c in 0..d.c {
            let g = upstream.plane(c, t);
            grads.s[c] += T::dot(g, x.plane(c, t));
            grads.b[c] += T::sum_slice(g);
            let s = p.s[c];
            dx.plane_mut(c, t).iter_mut().for_each(|v| *v *= s);
        }
    }
    Ok((dx, grads))
}
