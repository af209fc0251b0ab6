//! Residual blueprints, parameter sharing across domains, and the model's
//! forward/backward passes.
//!
//! A [`Model`] owns one [`ParamBank`] for all domains. Each domain resolves
//! its layers through a [`DomainBinding`]: shared blocks point every domain at
//! the same tensor ids and at one normalization site whose collections are
//! indexed by domain, while unshared blocks get private tensors and private
//! single-domain sites.

mod bank;
mod blueprint;
mod model;
mod sharing;

pub use bank::{BatchMoment, Grads, NormSite, Param, ParamBank, ParamRole};
pub use blueprint::{build_blueprint, Blueprint, Preset, StageSpec, MULTIPLIERS};
pub use model::{
    apply_sharing, DomainBinding, Forward, Model, NormRef, ParamCounts, ParamGroup, UnitBinding,
    UnitPlan,
};
pub use sharing::{SharingConfig, SharingMode};
