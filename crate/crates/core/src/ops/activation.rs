use crate::error::{ensure_dim, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the upstream gradient where `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward<T: Scalar>(x: &Tensor4<T>, upstream: &Tensor4<T>) -> Result<Tensor4<T>> {
    ensure_dim("upstream length", x.len(), upstream.len())?;
    let mut g = upstream.clone();
    for (gi, &xi) in g.data_mut().iter_mut().zip(x.data()) {
        if xi <= T::zero() {
            *gi = T::zero();
        }
    }
    Ok(g)
}
