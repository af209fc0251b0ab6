use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::util::rng_for;
use crate::DomainId;

/// The domain visited at each step and how many times that domain was
/// visited before.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub entries: Vec<(DomainId, usize)>,
    pub batch_size: usize,
}

/// Entry `step` of the cyclic plan `1, 2, …, D, 1, 2, …`.
pub fn plan_entry(domains: usize, step: usize) -> (DomainId, usize) {
    (DomainId::from_index(step % domains), step / domains)
}

pub fn round_robin(domains: usize, steps: usize, batch_size: usize) -> Result<BatchPlan> {
    if domains == 0 || steps == 0 || batch_size == 0 {
        return Err(Error::Config(format!(
            "round robin needs D ≥ 1, steps ≥ 1 and batch size ≥ 1 (got {domains}, {steps}, {batch_size})"
        )));
    }
    Ok(BatchPlan {
        entries: (0..steps).map(|s| plan_entry(domains, s)).collect(),
        batch_size,
    })
}

impl BatchPlan {
    /// Visits per domain among the first `prefix` entries.
    pub fn visit_counts(&self, domains: usize, prefix: usize) -> Vec<usize> {
        let mut counts = vec![0; domains];
        for (d, _) in &self.entries[..prefix] {
            counts[d.index()] += 1;
        }
        counts
    }
}

/// Endless sequence of training batches of one domain. Each pass over the
/// training indices uses its own seeded permutation, and batch `k` takes
/// positions `k·B .. (k+1)·B` of the concatenated passes, so any batch can be
/// recreated from its index alone.
#[derive(Clone, Debug)]
pub struct DomainStream {
    indices: Vec<usize>,
    batch_size: usize,
    seed: u64,
    domain: DomainId,
}

impl DomainStream {
    pub fn new(indices: Vec<usize>, batch_size: usize, seed: u64, domain: DomainId) -> Result<Self> {
        if indices.is_empty() || batch_size == 0 {
            return Err(Error::Config(format!(
                "domain {domain} has no training examples or the batch size is 0"
            )));
        }
        Ok(Self {
            indices,
            batch_size,
            seed,
            domain,
        })
    }

    fn epoch(&self, e: usize) -> Vec<usize> {
        let mut p = self.indices.clone();
        p.shuffle(&mut rng_for(self.seed, "epoch", &[self.domain.get() as u64, e as u64]));
        p
    }

    /// Dataset indices of batch `k`.
    pub fn batch(&self, k: usize) -> Vec<usize> {
        let n = self.indices.len();
        let start = k * self.batch_size;
        let mut cache: Option<(usize, Vec<usize>)> = None;
        (start..start + self.batch_size)
            .map(|pos| {
                let e = pos / n;
                if cache.as_ref().is_none_or(|(ce, _)| *ce != e) {
                    cache = Some((e, self.epoch(e)));
                }
                cache.as_ref().expect("filled").1[pos % n]
            })
            .collect()
    }

    /// Batches needed for one pass over the training indices.
    pub fn batches_per_epoch(&self) -> usize {
        self.indices.len().div_ceil(self.batch_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_domains_six_steps() {
        let p = round_robin(3, 6, 4).unwrap();
        let ds: Vec<usize> = p.entries.iter().map(|(d, _)| d.get()).collect();
        assert_eq!(ds, vec![1, 2, 3, 1, 2, 3]);
        assert_eq!(p.entries[4].1, 1);
    }

    #[test]
    fn stream_covers_each_epoch_once() {
        let s = DomainStream::new((0..10).collect(), 4, 5, DomainId::from_index(0)).unwrap();
        let mut first: Vec<usize> = (0..10).flat_map(|k| s.batch(k)).take(10).collect();
        first.sort_unstable();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
        assert_eq!(s.batch(3), s.batch(3));
        assert_eq!(s.batches_per_epoch(), 3);
    }
}
