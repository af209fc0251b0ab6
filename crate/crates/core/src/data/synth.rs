use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, DomainDescriptor};
use crate::error::{Error, Result};
use crate::tensor::{Dims4, Tensor4};
use crate::util::rng_for;
use crate::DomainId;

/// A synthetic domain: `classes` prototypes rendered from low spatial
/// frequencies, sampled with pixel noise, then shifted per channel to
/// `mean_offset + √variance_scale · x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub classes: usize,
    pub n_per_class: usize,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default)]
    pub mean_offset: f64,
    #[serde(default = "one")]
    pub variance_scale: f64,
    /// Minimum RMS distance between any two (unit-RMS) prototypes.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    /// Share of the noise variance carried by a smooth random field instead
    /// of independent pixel noise.
    #[serde(default)]
    pub field_fraction: f64,
    /// Frequencies per axis used for prototypes and fields.
    #[serde(default = "default_frequencies")]
    pub frequencies: usize,
    /// Relative prototype amplitude per channel (empty: equal). Channels
    /// with gain 0 carry noise only.
    #[serde(default)]
    pub channel_gain: Vec<f64>,
    /// Seeds the samples.
    #[serde(default)]
    pub seed: u64,
    /// Seeds the class prototypes; specs that differ only in `seed` share
    /// their class geometry.
    #[serde(default)]
    pub geometry_seed: u64,
    #[serde(default = "yes")]
    pub flip_allowed: bool,
}

fn default_name() -> String {
    "synthetic".into()
}
fn default_size() -> usize {
    16
}
fn default_channels() -> usize {
    3
}
fn one() -> f64 {
    1.0
}
fn default_margin() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    1.0
}
fn default_frequencies() -> usize {
    3
}
fn yes() -> bool {
    true
}

impl SynthSpec {
    pub fn new(classes: usize, n_per_class: usize) -> Self {
        Self {
            name: default_name(),
            classes,
            n_per_class,
            size: default_size(),
            channels: default_channels(),
            mean_offset: 0.0,
            variance_scale: 1.0,
            margin: default_margin(),
            noise_std: default_noise(),
            field_fraction: 0.0,
            frequencies: default_frequencies(),
            channel_gain: Vec::new(),
            seed: 0,
            geometry_seed: 0,
            flip_allowed: true,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.classes < 2 {
            errs.push(format!("synthetic domain `{}` needs at least 2 classes", self.name));
        }
        if self.n_per_class == 0 || self.size == 0 || self.channels == 0 {
            errs.push(format!("synthetic domain `{}` has an empty dimension", self.name));
        }
        if !(self.margin > 0.0) {
            errs.push(format!("synthetic margin must be positive, got {}", self.margin));
        }
        if !(self.variance_scale > 0.0) {
            errs.push(format!("variance scale must be positive, got {}", self.variance_scale));
        }
        if !(self.noise_std >= 0.0) || !(0.0..=1.0).contains(&self.field_fraction) {
            errs.push("noise std must be ≥ 0 and field fraction in [0, 1]".into());
        }
        if self.frequencies < 1 || self.frequencies * self.frequencies < 2 {
            errs.push("at least 2 frequencies per axis are needed".into());
        }
        if !self.channel_gain.is_empty() {
            if self.channel_gain.len() != self.channels {
                errs.push(format!(
                    "channel_gain has {} entries for {} channels",
                    self.channel_gain.len(),
                    self.channels
                ));
            } else if self.channel_gain.iter().any(|g| !(*g >= 0.0)) || self.channel_gain.iter().all(|g| *g == 0.0) {
                errs.push("channel gains must be ≥ 0 and not all zero".into());
            }
        }
        errs
    }

    fn freqs(&self) -> Vec<(usize, usize)> {
        let f = self.frequencies.min(self.size);
        (0..f)
            .flat_map(|p| (0..f).map(move |q| (p, q)))
            .filter(|&pq| pq != (0, 0))
            .collect()
    }
}

/// Unit-RMS cosine basis images over one H×W plane, DC excluded so every
/// rendered image has zero mean per channel.
fn basis(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let n = spec.size;
    spec.freqs()
        .into_iter()
        .map(|(p, q)| {
            let mut b = Vec::with_capacity(n * n);
            for u in 0..n {
                for v in 0..n {
                    let cv = (std::f64::consts::PI * (v as f64 + 0.5) * p as f64 / n as f64).cos();
                    let cu = (std::f64::consts::PI * (u as f64 + 0.5) * q as f64 / n as f64).cos();
                    b.push(cv * cu);
                }
            }
            let rms = (b.iter().map(|x| x * x).sum::<f64>() / b.len() as f64).sqrt();
            b.iter().map(|x| x / rms).collect()
        })
        .collect()
}

/// Renders random coefficients over the basis for every channel; the result
/// (H·W·C values, channel-major) has expected RMS `1`.
fn render(basis: &[Vec<f64>], channels: usize, rng: &mut impl Rng) -> Vec<f64> {
    let plane = basis[0].len();
    let scale = 1.0 / (basis.len() as f64).sqrt();
    let mut out = vec![0.0; plane * channels];
    for c in 0..channels {
        let dst = &mut out[c * plane..(c + 1) * plane];
        for b in basis {
            let a = scale * rng.sample::<f64, _>(StandardNormal);
            for (d, &x) in dst.iter_mut().zip(b) {
                *d += a * x;
            }
        }
    }
    out
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn prototypes(spec: &SynthSpec, basis: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = spec.classes as f64;
    // K unit-RMS vectors can be at most √(2K/(K−1)) apart (regular simplex).
    let bound = (2.0 * k / (k - 1.0)).sqrt();
    if spec.margin >= bound.min(2.0) {
        return Err(Error::Generation(format!(
            "margin {} is infeasible for {} unit-RMS prototypes (must be below {:.4})",
            spec.margin,
            spec.classes,
            bound.min(2.0)
        )));
    }
    let mut rng = rng_for(spec.geometry_seed, "prototypes", &[spec.classes as u64, spec.channels as u64, spec.size as u64]);
    let mut protos: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    const TRIES: usize = 10_000;
    for _ in 0..spec.classes {
        let mut accepted = None;
        for _ in 0..TRIES {
            let mut p = render(basis, spec.channels, &mut rng);
            if !spec.channel_gain.is_empty() {
                let plane = basis[0].len();
                for (c, g) in spec.channel_gain.iter().enumerate() {
                    p[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v *= g);
                }
            }
            let r = rms(&p);
            p.iter_mut().for_each(|v| *v /= r);
            let far = protos.iter().all(|q| {
                let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
                rms(&d) >= spec.margin
            });
            if far {
                accepted = Some(p);
                break;
            }
        }
        match accepted {
            Some(p) => protos.push(p),
            None => {
                return Err(Error::Generation(format!(
                    "no prototype at distance ≥ {} found after {TRIES} draws ({} of {} placed, {} basis dimensions)",
                    spec.margin,
                    protos.len(),
                    spec.classes,
                    basis.len() * spec.channels
                )))
            }
        }
    }
    Ok(protos)
}

/// Generates a balanced dataset (example `i` has label `i mod K`), all in
/// the training split.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    let errs = spec.violations();
    if !errs.is_empty() {
        return Err(Error::ConfigViolations(errs));
    }
    let basis = basis(spec);
    let protos = prototypes(spec, &basis)?;
    let n = spec.classes * spec.n_per_class;
    let (s, c) = (spec.size, spec.channels);
    let plane = s * s;
    let white = (1.0 - spec.field_fraction).sqrt() * spec.noise_std;
    let field = spec.field_fraction.sqrt() * spec.noise_std;
    let gain = spec.variance_scale.sqrt();
    let mut data = Vec::with_capacity(n * plane * c);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % spec.classes;
        let mut rng = rng_for(spec.seed, "sample", &[i as u64]);
        let mut x = protos[k].clone();
        if spec.noise_std > 0.0 {
            if field > 0.0 {
                let f = render(&basis, c, &mut rng);
                x.iter_mut().zip(&f).for_each(|(a, b)| *a += field * b);
            }
            if white > 0.0 {
                for a in x.iter_mut() {
                    *a += white * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        data.extend(x.iter().map(|&v| (spec.mean_offset + gain * v) as f32));
        labels.push(k);
    }
    let images = Tensor4::new(Dims4::new(s, s, c, n), data)?;
    let descriptor = DomainDescriptor {
        id: DomainId::from_index(0),
        name: spec.name.clone(),
        input: (s, s, c),
        classes: spec.classes,
        flip_allowed: spec.flip_allowed,
        whitening: None,
        split_ratio: 1.0,
    };
    Dataset::new(descriptor, images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_examples_are_prototypes() {
        let mut spec = SynthSpec::new(4, 3);
        spec.noise_std = 0.0;
        spec.size = 6;
        let ds = generate_synthetic(&spec).unwrap();
        for t in 0..ds.len() {
            let k = ds.labels()[t];
            assert_eq!(ds.images().instance(t), ds.images().instance(k));
        }
    }

    #[test]
    fn seed_changes_samples_not_geometry() {
        let mut a = SynthSpec::new(3, 4);
        a.size = 6;
        a.seed = 1;
        let mut b = a.clone();
        b.seed = 2;
        let (da, db) = (generate_synthetic(&a).unwrap(), generate_synthetic(&b).unwrap());
        assert!(da.images().data().iter().zip(db.images().data()).all(|(x, y)| x != y));
        a.noise_std = 0.0;
        b.noise_std = 0.0;
        assert_eq!(generate_synthetic(&a).unwrap().images(), generate_synthetic(&b).unwrap().images());
    }

    #[test]
    fn mean_offset_shows_in_raw_mean() {
        let mut spec = SynthSpec::new(10, 100);
        spec.mean_offset = 5.0;
        spec.variance_scale = 4.0;
        let ds = generate_synthetic(&spec).unwrap();
        let d = ds.images().dims();
        for c in 0..d.c {
            let mean: f64 = (0..d.t)
                .map(|t| ds.images().plane(c, t).iter().map(|&v| v as f64).sum::<f64>())
                .sum::<f64>()
                / (d.t * d.plane()) as f64;
            assert!((mean - 5.0).abs() < 0.1, "channel {c} mean {mean}");
        }
    }

    #[test]
    fn prototypes_respect_margin() {
        let mut spec = SynthSpec::new(5, 1);
        spec.noise_std = 0.0;
        spec.margin = 1.2;
        let ds = generate_synthetic(&spec).unwrap();
        for i in 0..5 {
            for j in 0..i {
                let d: Vec<f64> = ds
                    .images()
                    .instance(i)
                    .iter()
                    .zip(ds.images().instance(j))
                    .map(|(a, b)| (a - b) as f64)
                    .collect();
                assert!(rms(&d) >= 1.2 - 1e-6);
            }
        }
    }

    #[test]
    fn zero_gain_channels_hold_no_signal() {
        let mut spec = SynthSpec::new(3, 1);
        spec.noise_std = 0.0;
        spec.size = 4;
        spec.channel_gain = vec![0.0, 1.0, 0.0];
        let ds = generate_synthetic(&spec).unwrap();
        for t in 0..3 {
            assert!(ds.images().plane(0, t).iter().all(|&v| v == 0.0));
            assert!(ds.images().plane(1, t).iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn infeasible_margin() {
        let mut spec = SynthSpec::new(3, 1);
        spec.margin = 2.0;
        assert!(matches!(generate_synthetic(&spec), Err(Error::Generation(_))));
    }
}
