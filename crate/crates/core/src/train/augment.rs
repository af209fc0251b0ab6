use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::{Dims4, Tensor4};

/// Zero padding used for crop augmentation: `size/8`, at least 1 (8 pixels
/// at 64×64).
pub fn crop_pad(size: usize) -> usize {
    (size / 8).max(1)
}

/// Crops an `H×W` window at offset `(dv, du)` of the zero-padded instance
/// `t`, optionally mirrored left-right, into `out`.
fn crop_into<T: Scalar>(x: &Tensor4<T>, t: usize, pad: usize, dv: usize, du: usize, flip: bool, out: &mut [T]) {
    let d = x.dims();
    for c in 0..d.c {
        let src = x.plane(c, t);
        let dst = &mut out[c * d.plane()..(c + 1) * d.plane()];
        for u in 0..d.w {
            let su = if flip { d.w - 1 - u } else { u };
            let pu = (su + du) as isize - pad as isize;
            for v in 0..d.h {
                let pv = (v + dv) as isize - pad as isize;
                dst[v + d.h * u] = if pu < 0 || pv < 0 || pu >= d.w as isize || pv >= d.h as isize {
                    T::zero()
                } else {
                    src[pv as usize + d.h * pu as usize]
                };
            }
        }
    }
}

/// Deterministic crop of every instance at one offset; `(pad, pad)` is the
/// identity.
pub fn crop<T: Scalar>(x: &Tensor4<T>, pad: usize, dv: usize, du: usize, flip: bool) -> Tensor4<T> {
    let d = x.dims();
    let mut out = Tensor4::zeros(d);
    for t in 0..d.t {
        crop_into(x, t, pad, dv, du, flip, out.instance_mut(t));
    }
    out
}

/// Random crop from the zero-padded image, then a left-right flip with
/// probability 1/2 when `flip_allowed`. Offsets are drawn per instance.
pub fn augment<T: Scalar>(x: &Tensor4<T>, flip_allowed: bool, rng: &mut impl Rng) -> Tensor4<T> {
    let d = x.dims();
    let pad = crop_pad(d.h.min(d.w));
    let mut out = Tensor4::zeros(Dims4::new(d.h, d.w, d.c, d.t));
    for t in 0..d.t {
        let dv = rng.random_range(0..=2 * pad);
        let du = rng.random_range(0..=2 * pad);
        let flip = flip_allowed && rng.random_bool(0.5);
        crop_into(x, t, pad, dv, du, flip, out.instance_mut(t));
    }
    out
}
