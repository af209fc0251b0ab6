use crate::error::{ensure_dim, Result};
use crate::ops::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::scalar::Scalar;
use crate::tensor::{Dims4, Tensor4};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads<T = f32> {
    pub input: Tensor4<T>,
    pub weights: Tensor4<T>,
    pub bias: Vec<T>,
}

/// Weight matrices are stored as `1×1×F×K` tensors, i.e. row-major `K×F`
/// with one row per output.
pub fn linear_dims(features: usize, outputs: usize) -> Dims4 {
    Dims4::new(1, 1, features, outputs)
}

fn check<T: Scalar>(x: &Tensor4<T>, weights: &Tensor4<T>) -> Result<(usize, usize)> {
    let wd = weights.dims();
    ensure_dim("linear weight layout (H)", 1, wd.h)?;
    ensure_dim("linear weight layout (W)", 1, wd.w)?;
    ensure_dim("flattened features", wd.c, x.dims().instance())?;
    Ok((wd.c, wd.t))
}

/// Affine map of each flattened instance: `y_t = W·x_t + b`, shaped 1×1×K×T.
pub fn linear<T: Scalar>(x: &Tensor4<T>, weights: &Tensor4<T>, bias: &[T]) -> Result<Tensor4<T>> {
    let (f, k) = check(x, weights)?;
    ensure_dim("bias", k, bias.len())?;
    let t = x.dims().t;
    let mut out = Tensor4::zeros(Dims4::new(1, 1, k, t));
    // Y[T×K] = X[T×F] · Wᵀ
    for (row, _) in out.data_mut().chunks_mut(k).zip(0..t) {
        row.copy_from_slice(bias);
    }
    gemm_nt(x.data(), weights.data(), out.data_mut(), t, f, k);
    Ok(out)
}

pub fn linear_backward<T: Scalar>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    upstream: &Tensor4<T>,
) -> Result<LinearGrads<T>> {
    let (f, k) = check(x, weights)?;
    let t = x.dims().t;
    ensure_dim("upstream outputs", k, upstream.dims().instance())?;
    ensure_dim("upstream T", t, upstream.dims().t)?;
    let dy = upstream.data();

    // dX[T×F] = dY[T×K] · W[K×F]
    let mut dx = Tensor4::zeros(x.dims());
    gemm_nn(dy, weights.data(), dx.data_mut(), t, k, f);
    // dW[K×F] = dYᵀ · X
    let mut dw = Tensor4::zeros(weights.dims());
    gemm_tn(dy, x.data(), dw.data_mut(), k, t, f);
    let mut db = vec![T::zero(); k];
    for row in dy.chunks(k) {
        for (a, &b) in db.iter_mut().zip(row) {
            *a += b;
        }
    }
    Ok(LinearGrads {
        input: dx,
        weights: dw,
        bias: db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matrix_passes_input() {
        let x = Tensor4::<f32>::from_f64(Dims4::new(1, 1, 3, 2), &[1., 2., 3., 4., 5., 6.]).unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let w = Tensor4::<f32>::from_f64(linear_dims(3, 3), &eye).unwrap();
        let y = linear(&x, &w, &[0.0; 3]).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_matrix_gives_bias() {
        let x = Tensor4::<f32>::filled(Dims4::new(2, 2, 1, 3), 7.0);
        let w = Tensor4::<f32>::zeros(linear_dims(4, 2));
        let y = linear(&x, &w, &[0.5, -1.0]).unwrap();
        assert_eq!(y.data(), &[0.5, -1.0, 0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn hand_multiplied_example() {
        let x = Tensor4::<f32>::from_f64(Dims4::new(1, 1, 2, 1), &[1., 2.]).unwrap();
        let w = Tensor4::<f32>::from_f64(linear_dims(2, 2), &[1., 1., 1., -1.]).unwrap();
        let y = linear(&x, &w, &[0., 0.]).unwrap();
        assert_eq!(y.data(), &[3., -1.]);
    }

    #[test]
    fn feature_mismatch_is_dimension_error() {
        let x = Tensor4::<f32>::zeros(Dims4::new(1, 1, 3, 1));
        let w = Tensor4::<f32>::zeros(linear_dims(2, 2));
        assert!(linear(&x, &w, &[0., 0.]).is_err());
    }
}
