use crate::error::{ensure_dim, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax − onehot)/T`. Logits are 1×1×K×T.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor4<T>,
    labels: &[usize],
) -> Result<(f64, Tensor4<T>)> {
    let d = logits.dims();
    ensure_dim("logits spatial size", 1, d.plane())?;
    ensure_dim("labels", d.t, labels.len())?;
    let k = d.c;
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::Label {
            index,
            label,
            classes: k,
        });
    }
    let inv_t = 1.0 / d.t as f64;
    let mut grad = Tensor4::zeros(d);
    let mut loss = 0.0;
    for (t, &label) in labels.iter().enumerate() {
        let z = logits.instance(t);
        let max = z.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = z.iter().map(|v| (v.f64() - max).exp()).sum();
        let log_denom = denom.ln();
        loss += log_denom - (z[label].f64() - max);
        let g = grad.instance_mut(t);
        for (j, gj) in g.iter_mut().enumerate() {
            let p = (z[j].f64() - max - log_denom).exp();
            let onehot = if j == label { 1.0 } else { 0.0 };
            *gj = T::of((p - onehot) * inv_t);
        }
    }
    Ok((loss * inv_t, grad))
}

/// Index of the largest logit per instance; ties go to the lowest index.
pub fn argmax<T: Scalar>(logits: &Tensor4<T>) -> Vec<usize> {
    (0..logits.dims().t)
        .map(|t| {
            let z = logits.instance(t);
            let mut best = 0;
            for j in 1..z.len() {
                if z[j] > z[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
