use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::scalar::Scalar;
use crate::DomainId;

/// Per-channel scale and bias of a scaling layer: `y = s_c·x + b_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleParams<T = f32> {
    pub s: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> ScaleParams<T> {
    pub fn identity(channels: usize) -> Self {
        Self {
            s: vec![T::one(); channels],
            b: vec![T::zero(); channels],
        }
    }

    pub fn zeros(channels: usize) -> Self {
        Self {
            s: vec![T::zero(); channels],
            b: vec![T::zero(); channels],
        }
    }

    pub fn new(s: Vec<T>, b: Vec<T>) -> Result<Self> {
        ensure_dim("scale bias length", s.len(), b.len())?;
        Ok(Self { s, b })
    }

    pub fn channels(&self) -> usize {
        self.s.len()
    }

    pub fn cast<U: Scalar>(&self) -> ScaleParams<U> {
        ScaleParams {
            s: crate::scalar::cast_slice(&self.s),
            b: crate::scalar::cast_slice(&self.b),
        }
    }
}

/// Per-channel means and (biased) variances, and how many batches went into them.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentParams<T = f32> {
    pub mu: Vec<T>,
    pub sigma2: Vec<T>,
    pub count: u64,
}

impl<T: Scalar> MomentParams<T> {
    /// Unset moments; unusable until at least one batch is accumulated.
    pub fn empty(channels: usize) -> Self {
        Self {
            mu: vec![T::zero(); channels],
            sigma2: vec![T::one(); channels],
            count: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    pub fn is_set(&self) -> bool {
        self.count > 0
    }

    pub fn cast<U: Scalar>(&self) -> MomentParams<U> {
        MomentParams {
            mu: crate::scalar::cast_slice(&self.mu),
            sigma2: crate::scalar::cast_slice(&self.sigma2),
            count: self.count,
        }
    }
}

/// Folds one more batch into a running arithmetic mean of batch moments.
pub fn accumulate_moments<T: Scalar>(
    running: &MomentParams<T>,
    batch: &MomentParams<T>,
) -> Result<MomentParams<T>> {
    ensure_dim("moment channels", running.channels(), batch.channels())?;
    if running.count == 0 {
        return Ok(MomentParams {
            count: 1,
            ..batch.clone()
        });
    }
    let n = running.count as f64;
    let mix = |old: &[T], new: &[T]| -> Vec<T> {
        old.iter()
            .zip(new)
            .map(|(&a, &b)| T::of((n * a.f64() + b.f64()) / (n + 1.0)))
            .collect()
    };
    Ok(MomentParams {
        mu: mix(&running.mu, &batch.mu),
        sigma2: mix(&running.sigma2, &batch.sigma2),
        count: running.count + 1,
    })
}

/// Collapses frozen-moment normalization followed by scaling into one affine map:
/// `s' = s/√(σ²+ε)`, `b' = b − s·μ/√(σ²+ε)`.
pub fn deploy_fold<T: Scalar>(
    moments: &MomentParams<T>,
    scale: &ScaleParams<T>,
    eps: f64,
) -> Result<ScaleParams<T>> {
    if !moments.is_set() {
        return Err(Error::UnfrozenMoments);
    }
    ensure_dim("moment channels", scale.channels(), moments.channels())?;
    let mut out = ScaleParams::zeros(scale.channels());
    for c in 0..scale.channels() {
        let inv = 1.0 / (moments.sigma2[c].f64() + eps).sqrt();
        let s = scale.s[c].f64();
        out.s[c] = T::of(s * inv);
        out.b[c] = T::of(scale.b[c].f64() - s * moments.mu[c].f64() * inv);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Bn,
    BnPlus,
    In,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleScope {
    Universal,
    Domain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentScope {
    Universal,
    Domain,
    None,
}

/// Which normalization runs at each site and which of its parameters are
/// domain specific.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormStrategy {
    pub kind: NormKind,
    pub scale_scope: ScaleScope,
    pub moment_scope: MomentScope,
}

impl NormStrategy {
    pub fn new(kind: NormKind, scale_scope: ScaleScope, moment_scope: MomentScope) -> Result<Self> {
        let s = Self {
            kind,
            scale_scope,
            moment_scope,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.moment_scope) {
            (NormKind::Bn, MomentScope::None) => Err(Error::Config(
                "BN needs moment_scope universal or domain".into(),
            )),
            (NormKind::Bn, _) | (_, MomentScope::None) => Ok(()),
            (kind, scope) => Err(Error::Config(format!(
                "{} computes moments on the fly; moment_scope must be none, not {}",
                kind.label(),
                scope.label()
            ))),
        }
    }

    /// The six strategies of the normalization ablation, in table order.
    pub fn ablation_rows() -> [NormStrategy; 6] {
        use MomentScope as M;
        use NormKind as K;
        use ScaleScope as S;
        let row = |kind, scale_scope, moment_scope| NormStrategy {
            kind,
            scale_scope,
            moment_scope,
        };
        [
            row(K::Bn, S::Universal, M::Universal),
            row(K::BnPlus, S::Universal, M::None),
            row(K::Bn, S::Universal, M::Domain),
            row(K::Bn, S::Domain, M::Domain),
            row(K::In, S::Universal, M::None),
            row(K::In, S::Domain, M::None),
        ]
    }

    pub fn uses_batch_statistics(&self) -> bool {
        matches!(self.kind, NormKind::Bn | NormKind::BnPlus)
    }
}

impl Default for NormStrategy {
    fn default() -> Self {
        Self {
            kind: NormKind::Bn,
            scale_scope: ScaleScope::Domain,
            moment_scope: MomentScope::Domain,
        }
    }
}

impl NormKind {
    pub fn label(&self) -> &'static str {
        match self {
            NormKind::Bn => "BN",
            NormKind::BnPlus => "BN+",
            NormKind::In => "IN",
            NormKind::None => "none",
        }
    }
}

impl ScaleScope {
    pub fn label(&self) -> &'static str {
        match self {
            ScaleScope::Universal => "universal",
            ScaleScope::Domain => "domain",
        }
    }
}

impl MomentScope {
    pub fn label(&self) -> &'static str {
        match self {
            MomentScope::Universal => "universal",
            MomentScope::Domain => "domain",
            MomentScope::None => "--",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScaleSet<T = f32> {
    Universal(ScaleParams<T>),
    PerDomain(Vec<ScaleParams<T>>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum MomentSet<T = f32> {
    None,
    Universal(MomentParams<T>),
    PerDomain(Vec<MomentParams<T>>),
}

/// The scale/bias collections `S, B` and moment collections `U, Σ` of one
/// normalization site. Universal and per-domain storage are mutually
/// exclusive by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainParamCollections<T = f32> {
    pub scales: ScaleSet<T>,
    pub moments: MomentSet<T>,
}

impl<T: Scalar> DomainParamCollections<T> {
    /// Fresh collections (`s = 1`, `b = 0`, unset moments) for `domains` domains.
    pub fn new(strategy: &NormStrategy, channels: usize, domains: usize) -> Self {
        let scales = match strategy.scale_scope {
            ScaleScope::Universal => ScaleSet::Universal(ScaleParams::identity(channels)),
            ScaleScope::Domain => {
                ScaleSet::PerDomain(vec![ScaleParams::identity(channels); domains])
            }
        };
        let moments = match (strategy.kind, strategy.moment_scope) {
            (NormKind::Bn, MomentScope::Universal) => {
                MomentSet::Universal(MomentParams::empty(channels))
            }
            (NormKind::Bn, MomentScope::Domain) => {
                MomentSet::PerDomain(vec![MomentParams::empty(channels); domains])
            }
            _ => MomentSet::None,
        };
        Self { scales, moments }
    }

    pub fn channels(&self) -> usize {
        self.scale_entries()[0].channels()
    }

    pub fn scale_entries(&self) -> &[ScaleParams<T>] {
        match &self.scales {
            ScaleSet::Universal(p) => std::slice::from_ref(p),
            ScaleSet::PerDomain(v) => v,
        }
    }

    pub fn scale_entries_mut(&mut self) -> &mut [ScaleParams<T>] {
        match &mut self.scales {
            ScaleSet::Universal(p) => std::slice::from_mut(p),
            ScaleSet::PerDomain(v) => v,
        }
    }

    pub fn moment_entries(&self) -> &[MomentParams<T>] {
        match &self.moments {
            MomentSet::None => &[],
            MomentSet::Universal(p) => std::slice::from_ref(p),
            MomentSet::PerDomain(v) => v,
        }
    }

    pub fn moment_entries_mut(&mut self) -> &mut [MomentParams<T>] {
        match &mut self.moments {
            MomentSet::None => &mut [],
            MomentSet::Universal(p) => std::slice::from_mut(p),
            MomentSet::PerDomain(v) => v,
        }
    }

    /// Which scale entry domain `d` resolves to.
    pub fn scale_slot(&self, d: DomainId) -> Result<usize> {
        match &self.scales {
            ScaleSet::Universal(_) => Ok(0),
            ScaleSet::PerDomain(v) => d.checked_index(v.len()),
        }
    }

    /// Which moment entry domain `d` resolves to, if moments exist.
    pub fn moment_slot(&self, d: DomainId) -> Result<Option<usize>> {
        match &self.moments {
            MomentSet::None => Ok(None),
            MomentSet::Universal(_) => Ok(Some(0)),
            MomentSet::PerDomain(v) => d.checked_index(v.len()).map(Some),
        }
    }

    /// Number of learnable scalars (scales and biases).
    pub fn learnable_count(&self) -> usize {
        self.scale_entries().iter().map(|p| 2 * p.channels()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> DomainParamCollections<U> {
        DomainParamCollections {
            scales: match &self.scales {
                ScaleSet::Universal(p) => ScaleSet::Universal(p.cast()),
                ScaleSet::PerDomain(v) => ScaleSet::PerDomain(v.iter().map(|p| p.cast()).collect()),
            },
            moments: match &self.moments {
                MomentSet::None => MomentSet::None,
                MomentSet::Universal(p) => MomentSet::Universal(p.cast()),
                MomentSet::PerDomain(v) => {
                    MomentSet::PerDomain(v.iter().map(|p| p.cast()).collect())
                }
            },
        }
    }
}

/// The muxer: the scale (and moment) parameters domain `d` uses.
pub fn mux<T: Scalar>(
    d: DomainId,
    coll: &DomainParamCollections<T>,
) -> Result<(&ScaleParams<T>, Option<&MomentParams<T>>)> {
    let scale = &coll.scale_entries()[coll.scale_slot(d)?];
    let moments = coll.moment_slot(d)?.map(|i| &coll.moment_entries()[i]);
    Ok((scale, moments))
}
