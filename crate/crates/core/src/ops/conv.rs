//! 2-D cross-correlation via im2col.
//!
//! Filter banks are `Tensor4` values of dims K×K×Cin×Cout, so each output
//! channel's filter is one contiguous row of `K·K·Cin` weights ordered like
//! the im2col rows.

use crate::error::{ensure_dim, Error, Result};
use crate::ops::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::par;
use crate::scalar::Scalar;
use crate::tensor::{Dims4, Tensor4};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T = f32> {
    pub input: Option<Tensor4<T>>,
    pub weights: Tensor4<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    h: usize,
    w: usize,
    cin: usize,
    k: usize,
    cout: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.k * self.k * self.cin
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

/// Zero padding added before (top/left) and after (bottom/right) the input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Padding {
    pub before: usize,
    pub after: usize,
}

impl Padding {
    pub fn uniform(pad: usize) -> Self {
        Self {
            before: pad,
            after: pad,
        }
    }
}

/// Output spatial size of a convolution, or a configuration error when the
/// geometry does not tile the padded input exactly.
pub fn conv_output_size(size: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    conv_output_size_padded(size, k, stride, Padding::uniform(pad))
}

pub fn conv_output_size_padded(size: usize, k: usize, stride: usize, pad: Padding) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Config("convolution stride must be positive".into()));
    }
    let padded = size + pad.before + pad.after;
    if padded < k {
        return Err(Error::Config(format!(
            "filter size {k} exceeds padded input size {padded}"
        )));
    }
    if (padded - k) % stride != 0 {
        return Err(Error::Config(format!(
            "output size ({size}+{}+{}−{k})/{stride}+1 is not integral",
            pad.before, pad.after
        )));
    }
    Ok((padded - k) / stride + 1)
}

fn geometry<T: Scalar>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    stride: usize,
    pad: Padding,
) -> Result<Geometry> {
    let xd = x.dims();
    let wd = weights.dims();
    ensure_dim("filter width (square filters)", wd.h, wd.w)?;
    ensure_dim("C (filter input channels)", wd.c, xd.c)?;
    let ho = conv_output_size_padded(xd.h, wd.h, stride, pad)?;
    let wo = conv_output_size_padded(xd.w, wd.w, stride, pad)?;
    Ok(Geometry {
        h: xd.h,
        w: xd.w,
        cin: xd.c,
        k: wd.h,
        cout: wd.t,
        stride,
        pad: pad.before,
        ho,
        wo,
    })
}

/// Unfolds one instance into a `(K·K·Cin) × (Ho·Wo)` patch matrix.
fn im2col<T: Scalar>(g: &Geometry, x: &[T], col: &mut [T]) {
    let p = g.cols();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ku in 0..g.k {
            for kv in 0..g.k {
                let r = kv + g.k * (ku + g.k * ci);
                let row = &mut col[r * p..(r + 1) * p];
                for ou in 0..g.wo {
                    let u = (ou * g.stride + ku) as isize - g.pad as isize;
                    let dst = &mut row[ou * g.ho..(ou + 1) * g.ho];
                    if u < 0 || u >= g.w as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[u as usize * g.h..(u as usize + 1) * g.h];
                    for (ov, d) in dst.iter_mut().enumerate() {
                        let v = (ov * g.stride + kv) as isize - g.pad as isize;
                        *d = if v < 0 || v >= g.h as isize {
                            T::zero()
                        } else {
                            src[v as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Folds a patch-matrix gradient back onto one instance (accumulating).
fn col2im<T: Scalar>(g: &Geometry, col: &[T], dx: &mut [T]) {
    let p = g.cols();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ku in 0..g.k {
            for kv in 0..g.k {
                let r = kv + g.k * (ku + g.k * ci);
                let row = &col[r * p..(r + 1) * p];
                for ou in 0..g.wo {
                    let u = (ou * g.stride + ku) as isize - g.pad as isize;
                    if u < 0 || u >= g.w as isize {
                        continue;
                    }
                    let dst = &mut plane[u as usize * g.h..(u as usize + 1) * g.h];
                    for ov in 0..g.ho {
                        let v = (ov * g.stride + kv) as isize - g.pad as isize;
                        if v >= 0 && v < g.h as isize {
                            dst[v as usize] += row[ou * g.ho + ov];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x` (H×W×Cin×T) with a K×K×Cin×Cout filter bank.
pub fn conv2d<T: Scalar>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    bias: &[T],
    stride: usize,
    pad: usize,
) -> Result<Tensor4<T>> {
    conv2d_padded(x, weights, bias, stride, Padding::uniform(pad))
}

/// As [`conv2d`] with possibly asymmetric padding.
pub fn conv2d_padded<T: Scalar>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    bias: &[T],
    stride: usize,
    pad: Padding,
) -> Result<Tensor4<T>> {
    let g = geometry(x, weights, stride, pad)?;
    ensure_dim("bias", g.cout, bias.len())?;
    let xd = x.dims();
    let out_dims = Dims4::new(g.ho, g.wo, g.cout, xd.t);
    let mut out = Tensor4::zeros(out_dims);
    let (rows, cols) = (g.rows(), g.cols());
    let wmat = weights.data();
    par::map_chunks_mut(out.data_mut(), g.cout * cols, |t, y| {
        for (co, &b) in bias.iter().enumerate() {
            y[co * cols..(co + 1) * cols].fill(b);
        }
        if g.k == 1 && g.stride == 1 && g.pad == 0 && g.ho == g.h {
            gemm_nn(wmat, x.instance(t), y, g.cout, rows, cols);
        } else {
            let mut col = vec![T::zero(); rows * cols];
            im2col(&g, x.instance(t), &mut col);
            gemm_nn(wmat, &col, y, g.cout, rows, cols);
        }
    });
    Ok(out)
}

/// Gradients of a convolution given the upstream gradient of its output.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    stride: usize,
    pad: usize,
    upstream: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    conv2d_backward_with(x, weights, stride, Padding::uniform(pad), upstream, true)
}

/// As [`conv2d_backward`]; `want_input = false` skips the input gradient
/// (first layer of a network).
pub fn conv2d_backward_with<T: Scalar>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    stride: usize,
    pad: Padding,
    upstream: &Tensor4<T>,
    want_input: bool,
) -> Result<ConvGrads<T>> {
    let g = geometry(x, weights, stride, pad)?;
    let xd = x.dims();
    let ud = upstream.dims();
    ensure_dim("upstream H", g.ho, ud.h)?;
    ensure_dim("upstream W", g.wo, ud.w)?;
    ensure_dim("upstream C", g.cout, ud.c)?;
    ensure_dim("upstream T", xd.t, ud.t)?;
    let (rows, cols) = (g.rows(), g.cols());
    let direct = g.k == 1 && g.stride == 1 && g.pad == 0 && g.ho == g.h;
    let wmat = weights.data();

    let mut dx = if want_input {
        Tensor4::zeros(xd)
    } else {
        Tensor4::zeros(xd.with_t(1))
    };
    let chunk = if want_input { xd.instance() } else { dx.len() };
    let per_instance = |t: usize, dxt: Option<&mut [T]>| {
        let dy = upstream.instance(t);
        let mut dw = vec![T::zero(); g.cout * rows];
        let db: Vec<T> = (0..g.cout)
            .map(|co| T::sum_slice(&dy[co * cols..(co + 1) * cols]))
            .collect();
        if direct {
            gemm_nt(dy, x.instance(t), &mut dw, g.cout, cols, rows);
            if let Some(dxt) = dxt {
                gemm_tn(wmat, dy, dxt, rows, g.cout, cols);
            }
        } else {
            let mut col = vec![T::zero(); rows * cols];
            im2col(&g, x.instance(t), &mut col);
            gemm_nt(dy, &col, &mut dw, g.cout, cols, rows);
            if let Some(dxt) = dxt {
                col.fill(T::zero());
                gemm_tn(wmat, dy, &mut col, rows, g.cout, cols);
                col2im(&g, &col, dxt);
            }
        }
        (dw, db)
    };
    let partials: Vec<(Vec<T>, Vec<T>)> = if want_input {
        par::map_chunks_mut(dx.data_mut(), chunk, |t, dxt| per_instance(t, Some(dxt)))
    } else {
        par::map_range(xd.t, |t| per_instance(t, None))
    };

    // Fixed instance order keeps the reduction deterministic.
    let mut dw = vec![T::zero(); g.cout * rows];
    let mut db = vec![T::zero(); g.cout];
    for (pw, pb) in &partials {
        for (a, &b) in dw.iter_mut().zip(pw) {
            *a += b;
        }
        for (a, &b) in db.iter_mut().zip(pb) {
            *a += b;
        }
    }
    let weights_grad = Tensor4::new(weights.dims(), dw)?;
    Ok(ConvGrads {
        input: want_input.then_some(dx),
        weights: weights_grad,
        bias: db,
    })
}
