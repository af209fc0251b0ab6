//! Batch/instance normalization, the domain-multiplexed scaling layer, moment
//! accumulation and deploy-time folding.

mod ops;
mod params;
mod site;

pub use ops::{
    batch_norm_backward, batch_norm_forward, frozen_norm_forward, instance_norm_backward,
    instance_norm_forward, scale_backward, scale_forward,
};
pub use params::{
    accumulate_moments, deploy_fold, mux, DomainParamCollections, MomentParams, MomentScope,
    MomentSet, NormKind, NormStrategy, ScaleParams, ScaleScope, ScaleSet,
};
pub use site::{normalize, BatchDomain, Mode, Normalization};

pub(crate) use site::{site_backward, site_forward, SiteCache};

/// Default ε for every normalization.
pub const DEFAULT_EPS: f64 = 1e-5;
