#![allow(dead_code)]

use unirep::data::{generate_synthetic, Dataset, SynthSpec};
use unirep::network::{apply_sharing, build_blueprint, Blueprint, Model, Preset, SharingConfig, SharingMode};
use unirep::norm::NormStrategy;

/// Desk8 at 8×8 inputs.
pub fn blueprint(classes: &[usize], norm: NormStrategy) -> Blueprint {
    build_blueprint(Preset::Desk8, 1, norm, classes)
        .unwrap()
        .with_input(8, 3)
        .unwrap()
}

pub fn model(classes: &[usize], mode: SharingMode, seed: u64) -> Model<f32> {
    let bp = blueprint(classes, NormStrategy::default());
    apply_sharing(&bp, &SharingConfig::new(mode, 1), seed).unwrap()
}

/// A small synthetic domain at 8×8 with an 80/20 split.
pub fn domain(classes: usize, n_per_class: usize, seed: u64, offset: f64) -> Dataset {
    let mut s = SynthSpec::new(classes, n_per_class);
    s.size = 8;
    s.seed = seed;
    s.geometry_seed = seed;
    s.mean_offset = offset;
    s.noise_std = 0.5;
    generate_synthetic(&s).unwrap().with_split(0.8, seed).unwrap()
}
