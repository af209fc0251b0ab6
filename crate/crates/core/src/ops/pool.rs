use crate::error::{ensure_dim, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims4, Tensor4};

/// Per-channel, per-instance spatial mean, shaped 1×1×C×T.
pub fn global_avg_pool<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let d = x.dims();
    let scale = T::one() / T::of_usize(d.plane());
    let data = (0..d.t)
        .flat_map(|t| (0..d.c).map(move |c| (c, t)))
        .map(|(c, t)| T::sum_slice(x.plane(c, t)) * scale)
        .collect();
    Tensor4::new(Dims4::new(1, 1, d.c, d.t), data).expect("pooled dims are consistent")
}

/// Spreads each pooled gradient uniformly over its spatial plane.
pub fn global_avg_pool_backward<T: Scalar>(
    input_dims: Dims4,
    upstream: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let ud = upstream.dims();
    ensure_dim("upstream C", input_dims.c, ud.c)?;
    ensure_dim("upstream T", input_dims.t, ud.t)?;
    ensure_dim("upstream spatial size", 1, ud.plane())?;
    let scale = T::one() / T::of_usize(input_dims.plane());
    let mut g = Tensor4::zeros(input_dims);
    for t in 0..input_dims.t {
        for c in 0..input_dims.c {
            let v = upstream.at(0, 0, c, t) * scale;
            g.plane_mut(c, t).fill(v);
        }
    }
    Ok(g)
}

/// Keeps every `stride`-th row and column starting at 0; output size is
/// `ceil(H/stride) × ceil(W/stride)`.
pub fn subsample<T: Scalar>(x: &Tensor4<T>, stride: usize) -> Tensor4<T> {
    let d = x.dims();
    let (ho, wo) = (d.h.div_ceil(stride), d.w.div_ceil(stride));
    Tensor4::from_fn(Dims4::new(ho, wo, d.c, d.t), |v, u, c, t| {
        x.at(v * stride, u * stride, c, t)
    })
}

/// Scatters the gradient of [`subsample`] back; skipped positions get 0.
pub fn subsample_backward<T: Scalar>(
    input_dims: Dims4,
    stride: usize,
    upstream: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let ud = upstream.dims();
    ensure_dim("upstream H", input_dims.h.div_ceil(stride), ud.h)?;
    ensure_dim("upstream W", input_dims.w.div_ceil(stride), ud.w)?;
    ensure_dim("upstream C", input_dims.c, ud.c)?;
    ensure_dim("upstream T", input_dims.t, ud.t)?;
    let mut g = Tensor4::zeros(input_dims);
    for t in 0..ud.t {
        for c in 0..ud.c {
            for u in 0..ud.w {
                for v in 0..ud.h {
                    g.set(v * stride, u * stride, c, t, upstream.at(v, u, c, t));
                }
            }
        }
    }
    Ok(g)
}
