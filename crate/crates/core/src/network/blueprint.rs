use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::NormStrategy;

/// Named architecture presets.
///
/// `Resnet38` is the four-stage residual family with filters
/// `{16, 32, 128, 256}`; `Desk8` is a two-stage scaled-down member of the same
/// family for desk-scale experiments (it does not correspond to any published
/// network).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk8,
    Resnet38,
}

impl Preset {
    pub fn label(&self) -> &'static str {
        match self {
            Preset::Desk8 => "desk8",
            Preset::Resnet38 => "resnet38",
        }
    }

    /// `(input size, filters, units per stage)` before the multiplier.
    fn shape(&self) -> (usize, &'static [usize], usize) {
        match self {
            Preset::Desk8 => (16, &[8, 16], 2),
            Preset::Resnet38 => (64, &[16, 32, 128, 256], 4),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk8" => Ok(Preset::Desk8),
            "resnet38" => Ok(Preset::Resnet38),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected desk8 or resnet38)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    /// Spatial size of the stage's feature maps.
    pub size: usize,
    pub filters: usize,
    pub units: usize,
}

/// Layer plan of a residual network: a 3×3 stem, stages of pre-activation
/// residual units (the first unit of every stage after the first halves the
/// resolution), then norm → relu → global average pool → classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blueprint {
    pub preset: Preset,
    pub multiplier: usize,
    /// Input `(H, W, C)`; images are square.
    pub input: (usize, usize, usize),
    pub stem_filters: usize,
    pub stages: Vec<StageSpec>,
    /// Class count `K_d` per domain; its length is the domain count `D`.
    pub classes: Vec<usize>,
    pub norm: NormStrategy,
}

pub const MULTIPLIERS: [usize; 3] = [1, 2, 4];

/// The preset's blueprint for the given domains, with the preset's native
/// input size and 3 input channels.
pub fn build_blueprint(
    preset: Preset,
    multiplier: usize,
    norm: NormStrategy,
    classes: &[usize],
) -> Result<Blueprint> {
    if !MULTIPLIERS.contains(&multiplier) {
        return Err(Error::Config(format!(
            "capacity multiplier must be one of 1, 2, 4 (got {multiplier})"
        )));
    }
    let (size, filters, units) = preset.shape();
    let stages = filters
        .iter()
        .enumerate()
        .map(|(i, &f)| StageSpec {
            size: size >> i,
            filters: f * multiplier,
            units,
        })
        .collect::<Vec<_>>();
    let bp = Blueprint {
        preset,
        multiplier,
        input: (size, size, 3),
        stem_filters: stages[0].filters,
        stages,
        classes: classes.to_vec(),
        norm,
    };
    bp.validate()?;
    Ok(bp)
}

impl Blueprint {
    pub fn domains(&self) -> usize {
        self.classes.len()
    }

    pub fn filters(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.filters).collect()
    }

    /// The same network for a different square input; stage sizes follow
    /// (halving per stage).
    pub fn with_input(mut self, size: usize, channels: usize) -> Result<Self> {
        self.input = (size, size, channels);
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.size = size >> i;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let (h, w, c) = self.input;
        if h == 0 || c == 0 || h != w {
            errs.push(format!("input must be square with positive size, got {h}×{w}×{c}"));
        }
        if self.stages.is_empty() {
            errs.push("blueprint needs at least one stage".into());
        }
        if self.classes.is_empty() {
            errs.push("blueprint needs at least one domain".into());
        }
        for (d, &k) in self.classes.iter().enumerate() {
            if k < 2 {
                errs.push(format!("domain {} has {k} classes; at least 2 required", d + 1));
            }
        }
        if let Some(first) = self.stages.first() {
            if first.size != h {
                errs.push(format!("stage 1 size {} differs from input size {h}", first.size));
            }
            if first.filters != self.stem_filters {
                errs.push("stage 1 filters must equal stem filters".into());
            }
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.units == 0 {
                errs.push(format!("stage {} has no residual units", i + 1));
            }
            if s.filters == 0 || s.size == 0 {
                errs.push(format!("stage {} has zero size or filters", i + 1));
            }
            if i > 0 {
                let prev = self.stages[i - 1].size;
                if s.size >= prev {
                    errs.push(format!(
                        "stage sizes must strictly decrease ({} then {})",
                        prev, s.size
                    ));
                } else if s.size != prev.div_ceil(2) {
                    errs.push(format!(
                        "stage {} size {} is not half of {prev}",
                        i + 1,
                        s.size
                    ));
                }
            }
        }
        if let Err(e) = self.norm.validate() {
            errs.push(e.to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigViolations(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resnet38_filters() {
        let bp = build_blueprint(Preset::Resnet38, 1, NormStrategy::default(), &[10]).unwrap();
        assert_eq!(bp.filters(), vec![16, 32, 128, 256]);
        let sizes: Vec<_> = bp.stages.iter().map(|s| s.size).collect();
        assert_eq!(sizes, vec![64, 32, 16, 8]);
        assert!(bp.stages.iter().all(|s| s.units == 4));
    }

    #[test]
    fn desk8_doubles_elementwise() {
        let bp = build_blueprint(Preset::Desk8, 2, NormStrategy::default(), &[10]).unwrap();
        assert_eq!(bp.filters(), vec![16, 32]);
        assert_eq!(bp.stages[1].size, 8);
    }

    #[test]
    fn unsupported_multiplier() {
        let err = build_blueprint(Preset::Desk8, 3, NormStrategy::default(), &[10]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn smaller_input_rescales_stages() {
        let bp = build_blueprint(Preset::Desk8, 1, NormStrategy::default(), &[4])
            .unwrap()
            .with_input(8, 1)
            .unwrap();
        assert_eq!(bp.stages[0].size, 8);
        assert_eq!(bp.stages[1].size, 4);
        assert!(bp.clone().with_input(1, 3).is_err());
    }
}
