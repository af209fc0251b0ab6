use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::blueprint::{Blueprint, MULTIPLIERS};

/// Which parameters are bound across domains.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingMode {
    /// `D` independent networks.
    NoSharing,
    /// Everything shared, including the classifier (needs equal `K_d`).
    FullSharing,
    /// Everything shared except each domain's classifier.
    DeepSharing,
    /// The listed stages (1-based, contiguous) are shared; the other stages
    /// and every classifier are per domain. The stem follows stage 1 and the
    /// head normalization follows the last stage.
    Partial(Vec<usize>),
}

impl SharingMode {
    pub fn label(&self) -> String {
        match self {
            SharingMode::NoSharing => "no sharing".into(),
            SharingMode::FullSharing => "full sharing".into(),
            SharingMode::DeepSharing => "deep sharing".into(),
            SharingMode::Partial(s) => match (s.first(), s.last()) {
                (Some(a), Some(b)) if a != b => format!("partial (stages {a}-{b})"),
                (Some(a), _) => format!("partial (stage {a})"),
                _ => "partial (none)".into(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SharingConfig {
    pub mode: SharingMode,
    pub capacity_multiplier: usize,
}

impl SharingConfig {
    pub fn new(mode: SharingMode, capacity_multiplier: usize) -> Self {
        Self {
            mode,
            capacity_multiplier,
        }
    }

    /// All violations against a blueprint, empty when valid.
    pub fn violations(&self, bp: &Blueprint) -> Vec<String> {
        let mut errs = Vec::new();
        if !MULTIPLIERS.contains(&self.capacity_multiplier) {
            errs.push(format!(
                "capacity multiplier must be one of 1, 2, 4 (got {})",
                self.capacity_multiplier
            ));
        } else if self.capacity_multiplier != bp.multiplier {
            errs.push(format!(
                "sharing multiplier {} differs from blueprint multiplier {}",
                self.capacity_multiplier, bp.multiplier
            ));
        }
        if let SharingMode::Partial(stages) = &self.mode {
            if stages.is_empty() {
                errs.push("partial sharing needs a non-empty stage set".into());
            }
            if stages.iter().any(|&s| s == 0 || s > bp.stages.len()) {
                errs.push(format!(
                    "partial stage set {stages:?} outside 1..={}",
                    bp.stages.len()
                ));
            }
            if stages.windows(2).any(|w| w[1] != w[0] + 1) {
                errs.push(format!(
                    "partial stage set {stages:?} must be contiguous and ascending"
                ));
            }
        }
        errs
    }

    pub fn validate(&self, bp: &Blueprint) -> Result<()> {
        if self.mode == SharingMode::FullSharing {
            let k = &bp.classes;
            if k.iter().any(|&x| x != k[0]) {
                return Err(Error::ClassCount(k.clone()));
            }
        }
        let errs = self.violations(bp);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigViolations(errs))
        }
    }

    /// Whether stage `s` (1-based) is shared across domains.
    pub fn stage_shared(&self, s: usize) -> bool {
        match &self.mode {
            SharingMode::NoSharing => false,
            SharingMode::FullSharing | SharingMode::DeepSharing => true,
            SharingMode::Partial(set) => set.contains(&s),
        }
    }

    pub fn classifier_shared(&self) -> bool {
        self.mode == SharingMode::FullSharing
    }
}
