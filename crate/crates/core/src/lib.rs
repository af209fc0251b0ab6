//! Multi-domain image classification with a single shared network whose
//! normalization parameters are multiplexed per domain.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] and [`ops`]: H×W×C×T tensors and primitive layers with
//!   hand-written backward passes, checked by [`gradcheck`].
//! - [`norm`]: batch/instance normalization, scaling layers, the muxer,
//!   moment accumulation and deploy folding.
//! - [`network`]: residual blueprints and parameter sharing across domains.
//! - [`data`]: domain descriptors, whitening, splits, synthetic domains and
//!   the UDRD binary dataset format.
//! - [`train`]: round-robin pure-batch training with momentum SGD.
//! - [`experiment`]: configs, checkpoints, metrics and reports.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is on (the default) and plain iteration otherwise.

pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod network;
pub mod norm;
pub mod ops;
pub mod par;
pub mod scalar;
pub mod tensor;
pub mod train;
pub(crate) mod util;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Dims4, GradPair, Tensor4};

/// 1-based domain index `d ∈ 1..=D`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct DomainId(usize);

impl DomainId {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            Err(Error::DomainIndex { index: 0, count: 0 })
        } else {
            Ok(Self(d))
        }
    }

    /// Domain with 0-based position `i`.
    pub fn from_index(i: usize) -> Self {
        Self(i + 1)
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// 0-based position.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    /// 0-based position, checked against a domain count.
    pub fn checked_index(self, count: usize) -> Result<usize> {
        if self.0 <= count {
            Ok(self.0 - 1)
        } else {
            Err(Error::DomainIndex {
                index: self.0,
                count,
            })
        }
    }

    pub fn all(count: usize) -> impl Iterator<Item = DomainId> {
        (1..=count).map(DomainId)
    }
}

impl TryFrom<usize> for DomainId {
    type Error = Error;

    fn try_from(d: usize) -> Result<Self> {
        Self::new(d)
    }
}

impl From<DomainId> for usize {
    fn from(d: DomainId) -> usize {
        d.0
    }
}

impl std::fmt::Display for DomainId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
