use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::network::Model;
use crate::norm::Mode;
use crate::ops::argmax;
use crate::par;
use crate::DomainId;

/// Top-1 error in percent, ties broken toward the lowest class index.
pub fn error_rate(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = predictions.iter().zip(labels).filter(|(p, l)| p != l).count();
    100.0 * wrong as f64 / labels.len() as f64
}

/// Central-crop (unaugmented) top-1 error of domain `d` on one split,
/// evaluated in consecutive batches of `batch_size` in index order.
pub fn evaluate(
    model: &Model<f32>,
    ds: &Dataset,
    d: DomainId,
    split: Split,
    mode: Mode,
    batch_size: usize,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::Config("evaluation batch size must be positive".into()));
    }
    if mode == Mode::Train {
        return Err(Error::Config("evaluation needs the frozen or bn_plus mode".into()));
    }
    let idx = ds.indices(split);
    let chunks: Vec<&[usize]> = idx.chunks(batch_size).collect();
    let wrong = par::map_slice(&chunks, |chunk| -> Result<usize> {
        let (x, labels) = ds.batch(chunk);
        let fwd = model.forward(&x, d, mode, false)?;
        Ok(argmax(&fwd.logits)
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p != l)
            .count())
    });
    let mut total = 0;
    for w in wrong {
        total += w?;
    }
    Ok(if idx.is_empty() { 0.0 } else { 100.0 * total as f64 / idx.len() as f64 })
}

/// Per-domain errors and their mean.
pub fn evaluate_all(
    model: &Model<f32>,
    datasets: &[Dataset],
    split: Split,
    mode: Mode,
    batch_size: usize,
) -> Result<(Vec<f64>, f64)> {
    let errs = datasets
        .iter()
        .enumerate()
        .map(|(i, ds)| evaluate(model, ds, DomainId::from_index(i), split, mode, batch_size))
        .collect::<Result<Vec<_>>>()?;
    let mean = errs.iter().sum::<f64>() / errs.len().max(1) as f64;
    Ok((errs, mean))
}
