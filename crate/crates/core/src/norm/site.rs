//! A normalization site: normalization (per [`NormStrategy`]) followed by the
//! muxed scaling layer.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::norm::ops::{
    batch_normalize, frozen_normalize, identity_normalize, instance_normalize, normalize_backward,
    scale_backward, scale_forward, Normalized,
};
use crate::norm::params::{DomainParamCollections, MomentParams, NormKind, NormStrategy, ScaleParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;
use crate::DomainId;

/// Forward-pass phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Batch statistics; BN sites report them for accumulation.
    Train,
    /// Test time with frozen (accumulated) BN moments.
    Frozen,
    /// Test time with BN moments estimated from the test batch itself.
    BnPlus,
}

/// Which domains a batch was drawn from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BatchDomain {
    Pure(DomainId),
    /// One tag per instance.
    Mixed(Vec<DomainId>),
}

impl BatchDomain {
    fn distinct(&self) -> Vec<usize> {
        match self {
            BatchDomain::Pure(d) => vec![d.get()],
            BatchDomain::Mixed(tags) => {
                let mut v: Vec<usize> = tags.iter().map(|d| d.get()).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    fn tag(&self, t: usize) -> DomainId {
        match self {
            BatchDomain::Pure(d) => *d,
            BatchDomain::Mixed(tags) => tags[t],
        }
    }
}

/// Output of [`normalize`].
#[derive(Clone, Debug)]
pub struct Normalization<T = f32> {
    pub y: Tensor4<T>,
    /// Batch statistics, present for BN in train mode.
    pub batch_moments: Option<MomentParams<T>>,
}

/// Cached state of one site for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct SiteCache<T> {
    norm: Normalized<T>,
    scale: ScaleParams<T>,
    pub scale_slot: usize,
}

pub(crate) struct SiteOutput<T> {
    pub y: Tensor4<T>,
    pub cache: Option<SiteCache<T>>,
    pub batch_moments: Option<MomentParams<T>>,
}

fn normalize_only<T: Scalar>(
    x: &Tensor4<T>,
    strategy: &NormStrategy,
    moments: Option<&MomentParams<T>>,
    mode: Mode,
    eps: f64,
) -> Result<(Normalized<T>, Option<MomentParams<T>>)> {
    Ok(match (strategy.kind, mode) {
        (NormKind::Bn, Mode::Train) => {
            let (n, m) = batch_normalize(x, eps);
            (n, Some(m))
        }
        (NormKind::Bn, Mode::Frozen) => {
            let m = moments.filter(|m| m.is_set()).ok_or(Error::UnfrozenMoments)?;
            (frozen_normalize(x, m, eps)?, None)
        }
        (NormKind::Bn, Mode::BnPlus) | (NormKind::BnPlus, _) => (batch_normalize(x, eps).0, None),
        (NormKind::In, _) => (instance_normalize(x, eps), None),
        (NormKind::None, _) => (identity_normalize(x), None),
    })
}

/// Site forward for a pure batch of domain `d` (collection-local index).
pub(crate) fn site_forward<T: Scalar>(
    x: &Tensor4<T>,
    strategy: &NormStrategy,
    coll: &DomainParamCollections<T>,
    d: DomainId,
    mode: Mode,
    eps: f64,
    retain: bool,
) -> Result<SiteOutput<T>> {
    let scale_slot = coll.scale_slot(d)?;
    let moments = coll.moment_slot(d)?.map(|i| &coll.moment_entries()[i]);
    let scale = &coll.scale_entries()[scale_slot];
    let (norm, batch_moments) = normalize_only(x, strategy, moments, mode, eps)?;
    let y = scale_forward(&norm.xhat, scale)?;
    let cache = retain.then(|| SiteCache {
        norm,
        scale: scale.clone(),
        scale_slot,
    });
    Ok(SiteOutput {
        y,
        cache,
        batch_moments,
    })
}

/// `(dx, scale gradients)` for a cached site.
pub(crate) fn site_backward<T: Scalar>(
    cache: &SiteCache<T>,
    upstream: &Tensor4<T>,
) -> Result<(Tensor4<T>, ScaleParams<T>)> {
    let (dxhat, grads) = scale_backward(&cache.norm.xhat, &cache.scale, upstream)?;
    Ok((normalize_backward(&cache.norm, &dxhat), grads))
}

/// Normalizes a tagged batch according to `strategy`, then applies the
/// scaling layer selected by the muxer.
///
/// BN and BN+ require pure batches; IN and scale-only sites accept mixed
/// batches and mux scales per instance.
pub fn normalize<T: Scalar>(
    x: &Tensor4<T>,
    strategy: &NormStrategy,
    batch: &BatchDomain,
    coll: &DomainParamCollections<T>,
    mode: Mode,
    eps: f64,
) -> Result<Normalization<T>> {
    strategy.validate()?;
    ensure_dim("scale channels", x.dims().c, coll.channels())?;
    let distinct = batch.distinct();
    if let BatchDomain::Mixed(tags) = batch {
        ensure_dim("domain tags", x.dims().t, tags.len())?;
    }
    if distinct.len() > 1 && strategy.uses_batch_statistics() {
        return Err(Error::Purity(distinct));
    }
    if distinct.len() == 1 {
        let d = batch.tag(0);
        let out = site_forward(x, strategy, coll, d, mode, eps, false)?;
        return Ok(Normalization {
            y: out.y,
            batch_moments: out.batch_moments,
        });
    }

    let (norm, _) = normalize_only(x, strategy, None, mode, eps)?;
    let mut y = norm.xhat;
    let entries = coll.scale_entries();
    let dims = y.dims();
    for t in 0..dims.t {
        let p = &entries[coll.scale_slot(batch.tag(t))?];
        for c in 0..dims.c {
            let (s, b) = (p.s[c], p.b[c]);
            y.plane_mut(c, t).iter_mut().for_each(|v| *v = s * *v + b);
        }
    }
    Ok(Normalization {
        y,
        batch_moments: None,
    })
}
